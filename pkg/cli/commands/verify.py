# cli/commands/verify.py

import json
import os

from core.config import SDI_OUTPUT_DIR, SDI_WORKERS
from core.storage import write_report
from sdi.verify import check_names, run_checks

EXIT_VERIFY_FAILED = 3


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Run the acceptance checks and write a JSON report")
    parser.add_argument("--quick", action="store_true", help="Reduced grids and sample counts")
    parser.add_argument("--fault-injection", action="store_true", dest="fault_injection",
                        help="Perturb a basis norm; the variance oracle must then fail")
    parser.add_argument("--check", action="append", choices=check_names(), dest="checks")
    parser.add_argument("--workers", type=int, default=SDI_WORKERS)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=SDI_OUTPUT_DIR)
    parser.set_defaults(handler=run)


def run(args) -> int:
    report = run_checks(
        quick=args.quick,
        fault_injection=args.fault_injection,
        workers=args.workers,
        seed=args.seed,
        only=args.checks,
    )
    path = write_report(report, os.path.join(args.out, "verify.json"))
    for entry in report["checks"]:
        print(f"{'PASS' if entry['passed'] else 'FAIL'}  {entry['name']}: {json.dumps(entry['measured'], default=float)}")
    print(f"report: {path}")
    return 0 if report["passed"] else EXIT_VERIFY_FAILED
