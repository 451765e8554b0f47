import sys
from pathlib import Path

# make test-local helpers (oracles) importable
sys.path.insert(0, str(Path(__file__).parent))
