#!/usr/bin/env python3
"""Minimal stand-in for `coqtop -emacs` that knows one proof of add_comm."""
import sys

GOALS = {
    "stmt": "1 goal\n  \n  ============================\n  forall n m : nat, n + m = m + n\n",
    "intro": "1 goal\n  \n  n, m : nat\n  ============================\n  n + m = m + n\n",
    "split": "2 goals\n  \n  m : nat\n  ============================\n  0 + m = m + 0\n\ngoal 2 is:\n S n + m = m + S n\n",
    "base": "1 goal\n  \n  m : nat\n  ============================\n  0 + m = m + 0\n",
    "base_done": "This subproof is complete, but there are some unfocused goals.\nFocus next goal with bullet -.\n\ngoal 1 is:\n S n + m = m + S n\n",
    "step": "1 goal\n  \n  n, m : nat\n  IHn : n + m = m + n\n  ============================\n  S n + m = m + S n\n",
    "simpl": "1 goal\n  \n  n, m : nat\n  IHn : n + m = m + n\n  ============================\n  S (n + m) = m + S n\n",
    "rewritten": "1 goal\n  \n  n, m : nat\n  IHn : n + m = m + n\n  ============================\n  S (m + n) = m + S n\n",
    "done": "No more goals.\n",
}

STEPS = {
    ("stmt", "Proof."): ("stmt", ""),
    ("stmt", "intros n m."): ("intro", None),
    ("intro", "induction n."): ("split", None),
    ("split", "-"): ("base", None),
    ("base", "auto."): ("base_done", None),
    ("base_done", "-"): ("step", None),
    ("step", "simpl."): ("simpl", None),
    ("simpl", "rewrite IHn."): ("rewritten", None),
    ("rewritten", "apply plus_n_Sm."): ("done", None),
    ("done", "Qed."): ("closed", "add_comm is defined\n"),
}

stack = []  # states after each accepted command; state number = len + 1


def prompt():
    n = len(stack) + 1
    sys.stdout.write(f"<prompt>add_comm < {n} |add_comm| {n} < </prompt>")
    sys.stdout.flush()


prompt()
for line in sys.stdin:
    cmd = " ".join(line.split())
    if not cmd:
        continue
    if cmd.startswith("Timeout "):
        cmd = cmd.split(" ", 2)[2]
    if cmd.startswith("BackTo "):
        target = int(cmd[len("BackTo "):].rstrip("."))
        del stack[max(target - 1, 0):]
    elif cmd.startswith("Theorem "):
        stack.append("stmt")
        sys.stdout.write(GOALS["stmt"])
    else:
        current = stack[-1] if stack else None
        step = STEPS.get((current, cmd))
        if step is None:
            sys.stdout.write(f"Toplevel input, characters 0-{len(cmd)}:\n> {cmd}\nError:\nUnknown tactic {cmd}\n")
        else:
            nxt, text = step
            stack.append(nxt)
            sys.stdout.write(GOALS[nxt] if text is None else text)
    prompt()
