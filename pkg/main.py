# orchestrator: load or generate a topology, run Riemannian Pursuit (or the
# convergence / DoF-sweep experiments) and store the json/csv artifacts.
# same surface as the `tim` console script, e.g.
#   python main.py solve --topology net.json --out outputs/result.json

import sys

from timrp.cli import main

if __name__ == "__main__":
    sys.exit(main())
