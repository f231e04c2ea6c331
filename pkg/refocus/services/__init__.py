from .storage import StorageService, load_checkpoint
