"""Run the evaluation harness on the bundled synthetic dataset and print the table.

Run with ``python3 demos/eval_synthetic.py``.
"""

from recallkit.client import LocalClient
from recallkit.eval.dataset import bundled_dataset_path, load_dataset
from recallkit.eval.harness import EvalConfig, run_eval


def main() -> None:
    dataset = load_dataset(bundled_dataset_path())
    outcome = run_eval(dataset, LocalClient(), EvalConfig(k=10, parallelism=2))
    print(outcome.report.to_table())


if __name__ == "__main__":
    main()
