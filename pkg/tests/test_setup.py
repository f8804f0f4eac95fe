import os
import sys

# Ensure the project root is in python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def test_components_import_and_instantiate():
    print("Verifying imports...")
    from app.api.main import BenchmarkRequest, ImputeRequest, app
    from app.cli import build_parser
    from app.core.base_imputers import default_roster
    from app.core.config import build_run_config
    from app.core.pipeline import ImputationPipeline

    print("Instantiating logic...")
    pipeline = ImputationPipeline(build_run_config({}))
    assert len(pipeline.config_hash) == 16
    assert len(default_roster()) == 8
    assert build_parser().parse_args(["report", "r.csv"]).command == "report"

    print("Checking pydantic models...")
    ImputeRequest(csv="a\n1\n", method="mean")
    BenchmarkRequest(csv="a\n1\n")
    assert app.title

    print("SUCCESS: All components imported and instantiated.")


if __name__ == "__main__":
    try:
        test_components_import_and_instantiate()
    except ImportError as e:
        print(f"FAILURE: Import error: {e}")
    except Exception as e:
        print(f"FAILURE: Runtime error: {e}")
