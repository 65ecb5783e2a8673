"""Create synthetic datasets and a sample run configuration for demonstration purposes."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.dataset import write_csv
from src.evaluation.synthetic import retrieval_task


def create_retrieval_data(demo_dir: Path):
    """Database and query CSVs on the sphere, norms 1, 5 and 10."""
    task = retrieval_task(n_database=500, n_queries=50, p=64, rng=7)
    database = write_csv(task.database, str(demo_dir / "database.csv"))
    queries = write_csv(task.queries, str(demo_dir / "queries.csv"))
    return database, queries, task.database.bound


def create_sample_config(demo_dir: Path, database: str, queries: str):
    """A retrieval config comparing DP-RP against the sign mechanisms."""
    config = {
        "family": "dp_rp",
        "variant": "rp_g_opt",
        "epsilon": 5.0,
        "k": 64,
        "seed": 42,
        "n_seeds": 3,
        "epsilons": [1.0, 5.0, 10.0],
        "database": database,
        "queries": queries,
        "compare": [
            {"family": "sign", "variant": "rr_smooth", "epsilon": 5.0, "k": 64},
            {"family": "sign", "variant": "oporp_rr_smooth", "epsilon": 5.0, "k": 64, "repetitions": 4},
            {"family": "baseline", "variant": "signrp_plain", "epsilon": 1.0, "k": 64},
        ],
    }
    path = demo_dir / "retrieval_config.json"
    path.write_text(json.dumps(config, indent=2))
    return path


def create_synthetic_data():
    """Create all demo inputs."""

    demo_dir = Path("demo/sample_data")
    demo_dir.mkdir(parents=True, exist_ok=True)

    database, queries, bound = create_retrieval_data(demo_dir)
    config = create_sample_config(demo_dir, database, queries)

    print(f"Created: {database}")
    print(f"Created: {queries}")
    print(f"Created: {config}")
    print(f"\nSample data created in: {demo_dir}")
    print("\nTry:")
    print("  python main.py calibrate --eps 1 --delta 1e-6 --delta2 1")
    print(f"  python main.py privatize --input {database} --bound {bound:g} --variant rp_g_opt --eps 5 --k 64")
    print(f"  python main.py privatize --input {database} --bound {bound:g} --sign --variant rr-smooth --eps 5 --k 64")
    print(f"  python main.py bench retrieval --config {config} --bound {bound:g} --out data/outputs/retrieval")
    print("  python main.py bench knn --variant rp_g_opt --eps 5 --k 64 --n-seeds 3")
    print("  python main.py audit --out data/outputs/audit")


if __name__ == "__main__":
    create_synthetic_data()
