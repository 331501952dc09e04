"""
P3LS - Single Scenario Evaluation

Runs one experiment scenario end to end (simulation, centralized, local and
federated PLS, privacy audit) and checks the outcome against the scenario's
expectations. Scenarios are loaded from JSON files in the data/ directory.

Usage:
    python eval/run_scenario.py scenario_1_lossless
    python eval/run_scenario.py scenario_2_federation_gain
    python eval/run_scenario.py --list
"""

import asyncio
import json
import sys
import argparse
from pathlib import Path
from datetime import datetime
from typing import Dict, Any, List
from dotenv import load_dotenv

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from p3ls import audit_views
from p3ls.harness import ExperimentConfig, ExperimentReport, run_experiment
from p3ls.transcript import ProtocolTranscript

load_dotenv(override=True)

DATA_DIR = Path(__file__).parent / "data"
OUTPUT_DIR = Path(__file__).parent / "output"


# ============================================================================
# SCENARIO LOADING
# ============================================================================

def load_test_case(scenario_id: str) -> Dict[str, Any]:
    """Load a scenario from its JSON file."""
    test_file = DATA_DIR / f"{scenario_id}.json"

    if not test_file.exists():
        raise FileNotFoundError(f"Scenario not found: {test_file}")

    with open(test_file, "r", encoding="utf-8") as f:
        return json.load(f)


def list_available_tests() -> List[str]:
    """List all scenario IDs in the data directory."""
    return sorted(f.stem for f in DATA_DIR.glob("*.json"))


# ============================================================================
# VALIDATION
# ============================================================================

class ExperimentValidator:
    """Checks an experiment report against a scenario's expectations."""

    @staticmethod
    def validate_losslessness(report: ExperimentReport, expected: Dict[str, Any]) -> Dict[str, Any]:
        """Federated components and test R2 must match the centralized model."""
        issues = []
        warnings = []
        max_distance = expected.get("max_component_distance", 1e-12)
        max_gap = expected.get("max_r2_gap", 1e-8)

        for section in report.datasets:
            for record in section.records:
                if record.distances is None:
                    warnings.append(f"{section.name} rep {record.repetition}: no component distances")
                    continue
                distance = record.distances.max()
                if distance > max_distance:
                    issues.append(
                        f"{section.name} rep {record.repetition}: component distance {distance:.2e} > {max_distance:.0e}"
                    )
                cen = record.results.get("cen")
                fed = record.results.get("p3ls")
                if cen is None or fed is None:
                    continue
                if cen.k != fed.k:
                    issues.append(f"{section.name} rep {record.repetition}: k differs (cen {cen.k}, p3ls {fed.k})")
                gap = abs(cen.r2 - fed.r2)
                if gap > max_gap:
                    issues.append(f"{section.name} rep {record.repetition}: R2 gap {gap:.2e} > {max_gap:.0e}")

        return {
            "valid": len(issues) == 0,
            "issues": issues,
            "warnings": warnings
        }

    @staticmethod
    def validate_federation_gain(report: ExperimentReport, expected: Dict[str, Any]) -> Dict[str, Any]:
        """P3LS should predict better than the label holder's own stage alone."""
        issues = []
        warnings = []
        required = expected.get("p3ls_beats_local", False)

        for section in report.datasets:
            wins = 0
            compared = 0
            for record in section.records:
                local = record.results.get("local")
                fed = record.results.get("p3ls")
                if local is None or fed is None:
                    continue
                compared += 1
                if fed.r2 > local.r2:
                    wins += 1
                else:
                    message = f"{section.name} rep {record.repetition}: p3ls {fed.r2:.4f} <= local {local.r2:.4f}"
                    (issues if required else warnings).append(message)
            if compared == 0:
                warnings.append(f"{section.name}: local or p3ls not run")

        return {
            "valid": len(issues) == 0,
            "issues": issues,
            "warnings": warnings
        }

    @staticmethod
    def validate_audit(report: ExperimentReport, expected: Dict[str, Any]) -> Dict[str, Any]:
        """Every saved transcript must pass the view audit."""
        issues = []
        warnings = []
        must_pass = expected.get("audit_passes", True)

        for section in report.datasets:
            if section.transcript is None:
                warnings.append(f"{section.name}: no transcript saved")
                continue
            audit = audit_views(ProtocolTranscript.from_jsonl(section.transcript))
            if audit.passed != must_pass:
                issues.append(f"{section.name}: audit passed={audit.passed}, expected {must_pass}")
                issues.extend(f"{section.name}: {v}" for v in audit.violations)

        return {
            "valid": len(issues) == 0,
            "issues": issues,
            "warnings": warnings
        }


# ============================================================================
# SCENARIO EXECUTION
# ============================================================================

async def run_scenario(scenario_id: str, test_case_data: Dict[str, Any]) -> Dict[str, Any]:
    """Run the scenario's experiment and validate it."""
    print(f"\n{'='*80}")
    print(f"SCENARIO: {test_case_data['name']}")
    print(f"{'='*80}")
    print(f"Description: {test_case_data['description']}")

    experiment = test_case_data["experiment"]
    expected = test_case_data.get("expected", {})
    print(f"Datasets: {', '.join(experiment['datasets'])}")
    print(f"Repetitions: {experiment['repetitions']}, rows: {experiment.get('rows', 'default')}\n")

    results: Dict[str, Any] = {
        "scenario_id": scenario_id,
        "scenario_name": test_case_data["name"],
        "timestamp": datetime.now().isoformat(),
        "summary": {},
        "validations": {},
        "errors": []
    }
    validator = ExperimentValidator()

    try:
        print("🧪 Step 1/2: Running experiment...")
        cfg = ExperimentConfig(output_dir=str(OUTPUT_DIR / scenario_id), **experiment)
        report = await run_experiment(cfg)
        for section in report.datasets:
            results["summary"][section.name] = [s.model_dump() for s in section.summary]
            for s in section.summary:
                print(f"  ✓ {section.name} {s.model:5s} R2 {s.mean_r2:.4f} ± {s.std_r2:.4f} (k {s.mean_k:.1f})")

        print("\n🔍 Step 2/2: Validating...")
        if "p3ls" in cfg.models:
            results["validations"]["losslessness"] = validator.validate_losslessness(report, expected)
            results["validations"]["audit"] = validator.validate_audit(report, expected)
        if "local" in cfg.models and "p3ls" in cfg.models:
            results["validations"]["federation_gain"] = validator.validate_federation_gain(report, expected)
        for name, validation in results["validations"].items():
            print(f"  {'✓' if validation['valid'] else '✗'} {name}")

    except Exception as e:
        results["errors"].append({
            "type": type(e).__name__,
            "message": str(e),
            "stage": "experiment"
        })
        print(f"\n❌ ERROR: {e}")

    return results


# ============================================================================
# REPORT GENERATION
# ============================================================================

def generate_report(result: Dict[str, Any]) -> str:
    """Generate a text report for a single scenario."""
    lines = []
    lines.append("="*80)
    lines.append(f"EVALUATION REPORT: {result['scenario_name']}")
    lines.append("="*80)
    lines.append(f"Timestamp: {result['timestamp']}\n")

    total_validations = len(result["validations"])
    passed_validations = sum(1 for v in result["validations"].values() if v["valid"])

    lines.append("SUMMARY:")
    lines.append(f"  Validations: {passed_validations}/{total_validations} passed")
    lines.append(f"  Errors: {len(result['errors'])}\n")

    for dataset, summaries in result["summary"].items():
        lines.append(f"{dataset}:")
        for s in summaries:
            lines.append(f"  {s['model']:5s} R2 {s['mean_r2']:.4f} ± {s['std_r2']:.4f}  fit {s['mean_fit_time']:.3f}s")
        lines.append("")

    for name, validation in result["validations"].items():
        lines.append(f"{name.upper().replace('_', ' ')}:")
        if validation["valid"]:
            lines.append("  ✅ PASSED")
        else:
            lines.append("  ❌ FAILED")
            for issue in validation["issues"]:
                lines.append(f"    - {issue}")

        if validation["warnings"]:
            lines.append("  ⚠️  Warnings:")
            for warning in validation["warnings"]:
                lines.append(f"    - {warning}")
        lines.append("")

    if result["errors"]:
        lines.append("ERRORS:")
        for error in result["errors"]:
            lines.append(f"  - {error['type']}: {error['message']}")

    return "\n".join(lines)


# ============================================================================
# MAIN EXECUTION
# ============================================================================

async def main() -> None:
    """Main entry point."""
    parser = argparse.ArgumentParser(
        description="Evaluate a single P3LS experiment scenario"
    )
    parser.add_argument(
        "scenario_id",
        nargs="?",
        help="Scenario ID (e.g., scenario_1_lossless)"
    )
    parser.add_argument(
        "--list",
        action="store_true",
        help="List all available scenarios"
    )

    args = parser.parse_args()

    if args.list:
        print("\nAvailable Scenarios:")
        print("="*80)
        for scenario_id in list_available_tests():
            test_data = load_test_case(scenario_id)
            print(f"  • {scenario_id}")
            print(f"    Name: {test_data['name']}")
            print(f"    Description: {test_data['description']}")
            print()
        return

    if not args.scenario_id:
        print("Error: Please specify a scenario ID or use --list to see available scenarios")
        print("\nUsage:")
        print("  python eval/run_scenario.py scenario_1_lossless")
        print("  python eval/run_scenario.py --list")
        sys.exit(1)

    try:
        test_case_data = load_test_case(args.scenario_id)
    except FileNotFoundError as e:
        print(f"Error: {e}")
        print(f"\nAvailable scenarios: {', '.join(list_available_tests())}")
        sys.exit(1)

    print("\n" + "="*80)
    print("P3LS SCENARIO EVALUATION")
    print("="*80)

    result = await run_scenario(args.scenario_id, test_case_data)

    OUTPUT_DIR.mkdir(exist_ok=True)
    output_file = OUTPUT_DIR / f"results_{args.scenario_id}.json"
    with open(output_file, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2, ensure_ascii=False)
    print(f"\n📄 Full results saved to: {output_file}")

    report = generate_report(result)
    report_file = OUTPUT_DIR / f"report_{args.scenario_id}.txt"
    with open(report_file, "w", encoding="utf-8") as f:
        f.write(report)

    print("\n" + "="*80)
    print(report)
    print("="*80)
    print(f"\n📊 Report saved to: {report_file}")

    if result["errors"]:
        print("\n❌ Evaluation completed with errors")
        sys.exit(1)

    passed = sum(1 for v in result["validations"].values() if v["valid"])
    total = len(result["validations"])
    if passed == total:
        print("\n✅ All validations passed!")
    else:
        print(f"\n⚠️  Evaluation completed: {passed}/{total} validations passed")
        sys.exit(1)


if __name__ == "__main__":
    asyncio.run(main())
