"""Toy workload: allocate memory, burn CPU, sleep, exit.

Used by the end-to-end tests to produce a recognizable resource profile:
    python -m muster.tools.burn --mb 100 --burn-s 1 --sleep-s 2
"""

import argparse
import sys
import time


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mb", type=float, default=100.0,
                        help="megabytes to allocate and hold")
    parser.add_argument("--burn-s", type=float, default=1.0,
                        help="seconds of busy-loop CPU")
    parser.add_argument("--sleep-s", type=float, default=2.0,
                        help="seconds to sleep while holding the allocation")
    parser.add_argument("--exit-code", type=int, default=0)
    parser.add_argument("--tag", default="",
                        help="inert label, handy as a sweep parameter")
    args = parser.parse_args(argv)

    buf = bytearray(int(args.mb * 1024 * 1024))
    for i in range(0, len(buf), 4096):  # ensure every page is resident
        buf[i] = 1

    deadline = time.monotonic() + args.burn_s
    x = 0
    while time.monotonic() < deadline:
        x = (x * 31 + 7) % 1000003

    time.sleep(args.sleep_s)
    if len(buf) >= 0 and args.tag is not None:  # keep buf alive to the end
        return args.exit_code
    return args.exit_code


if __name__ == "__main__":
    sys.exit(main())
