"""
The line-numbered repair format
===============================

A fix is stored as line-range hunks against the buggy file rather than as a whole file.
"""

from codesurgeon.repair_format import (
    RepairTask,
    apply_hunks,
    compute_hunks,
    encode_input,
    encode_output,
    parse_output,
)

buggy = """def mean(xs):
    total = 0
    for x in xs:
        total += x
    return total / len(xs) - 1"""

fixed = """def mean(xs):
    if not xs:
        return 0.0
    total = 0
    for x in xs:
        total += x
    return total / len(xs)"""

# minimal hunks; the insertion is anchored on line 1 and rewrites it
hunks = compute_hunks(buggy, fixed)
for h in hunks:
    print(h)

task = RepairTask("stats.py", "Empty input divides by zero; result is off by one.", (1, 5), buggy, tuple(hunks))

# model input: tagged prompt with numbered source lines
print(encode_input(task))
print()

# model output: <file>, then range lines and replacement text, hunks split by <sep>
text = encode_output(task.file_name, hunks)
print(text)

name, parsed = parse_output(text)
assert apply_hunks(buggy, parsed) == fixed
print("\nround trip ok for", name)
