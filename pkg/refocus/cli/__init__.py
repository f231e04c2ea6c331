from .commands import COMMANDS, run_ablation, run_experiment
