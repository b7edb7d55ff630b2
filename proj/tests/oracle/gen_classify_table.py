"""Writes classify_table.inc: every wave-two flag vector with its expected
category, computed here in Python so the C++ classifier is checked against
an independent implementation."""
import itertools
import pathlib

FLAGS = ["breathing", "obeys", "pulse", "distress", "hemorrhage", "survivable", "minor"]


def expected(v):
    if not v["breathing"]:
        return "Black"
    unstable = (not v["obeys"]) or (not v["pulse"]) or v["distress"] or v["hemorrhage"]
    if unstable:
        return "Red" if v["survivable"] else "Grey"
    return "Green" if v["minor"] else "Yellow"


rows = []
for bits in itertools.product([0, 1], repeat=len(FLAGS)):
    v = dict(zip(FLAGS, map(bool, bits)))
    rows.append("  {%s, TriageCategory::%s}," % (", ".join(map(str, bits)), expected(v)))

out = pathlib.Path(__file__).with_name("classify_table.inc")
out.write_text(
    "// Generated by gen_classify_table.py. Columns: breathing, obeys, pulse,\n"
    "// distress, hemorrhage, survivable, minor, expected.\n" + "\n".join(rows) + "\n"
)
