#!/usr/bin/env python3
"""Recompute the hash chain of an exported SFC audit log.

Usage: rehash_log.py LOG.ndjson

Prints the head hash and exits 0 when every event links and rehashes
correctly, exits 1 otherwise. Uses only the Python standard library.
"""
import hashlib
import json
import sys


def canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def main(path):
    prev = hashlib.sha256(b"SFC-GENESIS").hexdigest()
    with open(path, "rb") as fh:
        data = fh.read()
    lines = data.decode("utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines):
        event = json.loads(line)
        if canonical(event) != line:
            print(f"line {i + 1}: not canonical", file=sys.stderr)
            return 1
        if event["seq"] != i or event["prev_hash"] != prev:
            print(f"line {i + 1}: broken link", file=sys.stderr)
            return 1
        body = {"kind": event["kind"], "payload": event["payload"], "seq": event["seq"]}
        digest = hashlib.sha256((prev + canonical(body)).encode("utf-8")).hexdigest()
        if digest != event["hash"]:
            print(f"line {i + 1}: hash mismatch", file=sys.stderr)
            return 1
        prev = digest
    print(prev)
    return 0


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print(__doc__, file=sys.stderr)
        sys.exit(2)
    sys.exit(main(sys.argv[1]))
