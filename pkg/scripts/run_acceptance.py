"""Run the acceptance suite and print only its PASS/FAIL lines.

    python scripts/run_acceptance.py            # all ten criteria, a few minutes
    python scripts/run_acceptance.py -k 7       # a single criterion
"""
import argparse
import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
SUITE = os.path.join(HERE, os.pardir, "tests", "test_acceptance.py")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-k", dest="criterion", type=int, help="run only this criterion number")
    args = ap.parse_args()
    cmd = [sys.executable, "-m", "pytest", "-q", "-s", "-p", "no:cacheprovider", SUITE]
    if args.criterion is not None:
        cmd += ["-k", f"criterion_{args.criterion}_"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    lines = [l for l in proc.stdout.splitlines() if l.startswith(("PASS criterion", "FAIL criterion"))]
    # -s echoes each line once as it happens and again in the summary
    for line in dict.fromkeys(lines):
        print(line)
    if proc.returncode not in (0, 1) or not lines:
        sys.stdout.write(proc.stdout[-3000:] + proc.stderr[-3000:])
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
