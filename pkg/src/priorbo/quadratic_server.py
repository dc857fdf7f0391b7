"""Reference objective server for the line protocol: y = -||x||^2.

Run with ``python -m priorbo.quadratic_server``.  Intended for tests and as
a template for wiring real models behind the protocol.  ``--garble`` makes
eval replies invalid JSON and ``--sleep`` delays them (both for exercising
client error paths).
"""

from __future__ import annotations

import argparse
import json
import sys
import time


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--threshold", type=float, default=-0.01)
    ap.add_argument("--garble", action="store_true", help="reply to eval with invalid JSON")
    ap.add_argument("--sleep", type=float, default=0.0, help="delay before each eval reply")
    args = ap.parse_args(argv)

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "hello":
                reply = json.dumps({"dim": args.dim, "threshold": args.threshold})
            elif op == "eval":
                if args.sleep:
                    time.sleep(args.sleep)
                if args.garble:
                    reply = "not json {"
                else:
                    x = [float(v) for v in req["x"]]
                    if len(x) != args.dim:
                        reply = json.dumps({"error": f"expected {args.dim} coordinates"})
                    else:
                        reply = json.dumps({"y": -sum(v * v for v in x)})
            else:
                reply = json.dumps({"error": f"unknown op: {op!r}"})
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            reply = json.dumps({"error": f"bad request: {exc}"})
        sys.stdout.write(reply + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
