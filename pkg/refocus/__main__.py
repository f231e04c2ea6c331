from refocus.main import main

raise SystemExit(main())
