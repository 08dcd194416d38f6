"""Compile a grammar into an executable recursive-descent parser program.

The control flow mirrors the grammar directly: each nonterminal becomes a
procedure, each rule becomes a dispatch arm keyed by its PREDICT set, and
tail-linear recursive arms are lowered to while loops.  Every arm carries a
coverage element, every procedure carries an error-exit element, and
injected dead branches become statically false guards with an element
inside.  The element ids are dense and deterministic from the grammar, so
the in-process executor and the exported C parser report identical sets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .grammar import (
    EOI,
    TOKEN_DOMAIN_SIZE,
    Grammar,
    GrammarError,
    PredictTable,
    check_ll1,
    compute_first_follow,
    reachable_nonterminals,
    serialize_grammar,
)
from .grammargen import GroundTruthLabel, label_for


class CompileError(ValueError):
    """Grammar rejected by the code generator (usually: not LL(1))."""


class GroundTruthMismatch(ValueError):
    """The provided label disagrees with the grammar's own reachability closure."""


@dataclass(frozen=True)
class CoverageElement:
    id: int
    kind: str  # 'rule-arm' | 'error-exit' | 'dead-guard'
    origin: object  # rule_id for rule-arm, nonterminal name otherwise


@dataclass(frozen=True)
class Arm:
    rule_id: int
    rhs: tuple
    predict: frozenset
    element_id: int
    is_loop: bool  # tail-linear self-recursive arm, lowered to a while loop


@dataclass(frozen=True)
class Procedure:
    nonterminal: str
    arms: tuple
    error_element_id: int
    dead_element_ids: tuple


@dataclass(frozen=True)
class ExecutionResult:
    covered: frozenset
    verdict: str  # 'accept' | 'reject'
    consumed: int
    steps: int


@dataclass(frozen=True)
class ParserProgram:
    start: str
    procedures: tuple  # of Procedure, nonterminal declaration order
    elements: tuple  # of CoverageElement, dense ids
    ground_truth: frozenset  # element ids
    source_grammar_digest: str
    dispatch: dict  # nonterminal -> {token: (element_id, push_items)}
    error_element: dict  # nonterminal -> element id

    @property
    def n_elements(self) -> int:
        return len(self.elements)


def compile_to_parser(grammar: Grammar, label: GroundTruthLabel = None) -> ParserProgram:
    """Lower a validated LL(1) grammar to a ParserProgram with coverage elements."""
    grammar.validate()
    table = compute_first_follow(grammar)
    conflicts = check_ll1(grammar, table)
    if conflicts:
        raise CompileError(f"grammar is not LL(1): {conflicts}")
    if label is None:
        label = label_for(grammar)
    label.validate_against(grammar)

    elements = []
    procedures = []
    dispatch = {}
    error_element = {}
    next_id = 0
    dead_by_nt = {}
    for nt in grammar.dead_marks:
        dead_by_nt[nt] = dead_by_nt.get(nt, 0) + 1

    for nt in grammar.nonterminals:
        arms = []
        for rule in grammar.rules_of(nt):
            is_loop = bool(rule.rhs) and rule.rhs[-1] == nt and nt not in rule.rhs[:-1]
            arms.append(
                Arm(rule.rule_id, rule.rhs, table.predict[rule.rule_id], next_id, is_loop)
            )
            elements.append(CoverageElement(next_id, "rule-arm", rule.rule_id))
            next_id += 1
        err_id = next_id
        elements.append(CoverageElement(next_id, "error-exit", nt))
        next_id += 1
        dead_ids = []
        for _ in range(dead_by_nt.get(nt, 0)):
            dead_ids.append(next_id)
            elements.append(CoverageElement(next_id, "dead-guard", nt))
            next_id += 1
        procedures.append(Procedure(nt, tuple(arms), err_id, tuple(dead_ids)))
        error_element[nt] = err_id
        # Executor dispatch: token -> (arm element, rhs items tagged with owner).
        dmap = {}
        for arm in arms:
            push = tuple(reversed([(sym, nt) for sym in arm.rhs]))
            for tok in arm.predict:
                dmap[tok] = (arm.element_id, push)
        dispatch[nt] = dmap

    digest = hashlib.sha256(serialize_grammar(grammar).encode()).hexdigest()
    truth = _ground_truth(procedures, grammar, table, label)
    return ParserProgram(
        start=grammar.start,
        procedures=tuple(procedures),
        elements=tuple(elements),
        ground_truth=truth,
        source_grammar_digest=digest,
        dispatch=dispatch,
        error_element=error_element,
    )


def _ground_truth(procedures, grammar, table, label, include_error_exits=True):
    reach = reachable_nonterminals(grammar)
    expect_reachable = {r.rule_id for r in grammar.rules if r.lhs in reach}
    if expect_reachable != set(label.reachable_rules):
        raise GroundTruthMismatch(
            "label.reachable_rules disagrees with the reachability closure"
        )
    truth = set()
    for proc in procedures:
        predict_union = set()
        for arm in proc.arms:
            predict_union |= arm.predict
            if arm.rule_id in label.reachable_rules:
                truth.add(arm.element_id)
        if (
            include_error_exits
            and proc.nonterminal in reach
            and len(predict_union) < TOKEN_DOMAIN_SIZE
        ):
            truth.add(proc.error_element_id)
    return frozenset(truth)


def ground_truth_elements(
    program: ParserProgram,
    grammar: Grammar,
    table: PredictTable,
    label: GroundTruthLabel,
    include_error_exits: bool = True,
) -> frozenset:
    """The exact set of reachable element ids (true maximum reachability S).

    A rule-arm element is reachable iff its rule is ground-truth reachable;
    dead guards never are; an error exit is reachable iff its procedure is
    start-reachable and the union of its arms' PREDICT sets leaves some
    token (byte or end-of-input) unclaimed.
    """
    label.validate_against(grammar)
    return _ground_truth(program.procedures, grammar, table, label, include_error_exits)


def execute_parser(program: ParserProgram, data: bytes, step_budget: int = 1_000_000) -> ExecutionResult:
    """Run the recursive-descent parser on a byte string.

    Dispatch failures and terminal mismatches cover the owning procedure's
    error-exit element and unwind; accept requires the start procedure to
    return with all input consumed.
    """
    if step_budget <= 0:
        raise ValueError("step_budget must be > 0")
    dispatch = program.dispatch
    error_element = program.error_element
    covered = set()
    n = len(data)
    pos = 0
    steps = 0
    stack = [(program.start, None)]
    while stack:
        steps += 1
        if steps > step_budget:
            return ExecutionResult(frozenset(covered), "reject", pos, steps)
        sym, owner = stack.pop()
        if type(sym) is int:
            if pos < n and data[pos] == sym:
                pos += 1
            else:
                covered.add(error_element[owner])
                return ExecutionResult(frozenset(covered), "reject", pos, steps)
        else:
            tok = data[pos] if pos < n else EOI
            entry = dispatch[sym].get(tok)
            if entry is None:
                covered.add(error_element[sym])
                return ExecutionResult(frozenset(covered), "reject", pos, steps)
            covered.add(entry[0])
            stack.extend(entry[1])
    verdict = "accept" if pos == n else "reject"
    return ExecutionResult(frozenset(covered), verdict, pos, steps)


def cyclomatic_complexity(program: ParserProgram) -> int:
    """Sum of per-procedure McCabe numbers of the compiled program.

    Per procedure: one path plus one decision per extra dispatch arm plus
    one per injected dead guard, i.e. M = arms + dead_guards.
    """
    total = 0
    for proc in program.procedures:
        total += len(proc.arms) + len(proc.dead_element_ids)
    return total


# ---------------------------------------------------------------------------
# C export backend
# ---------------------------------------------------------------------------

def _c_name(nt: str) -> str:
    return "parse_" + "".join(ch if ch.isalnum() else f"_{ord(ch)}_" for ch in nt)


def _emit_arm_body(lines, arm, proc, strip_tail_self):
    rhs = arm.rhs
    if strip_tail_self:
        rhs = rhs[:-1]
    for sym in rhs:
        if isinstance(sym, int):
            lines.append(f"      if (look() != {sym}) {{ hit[{proc.error_element_id}] = 1; return 1; }}")
            lines.append("      pos++;")
        else:
            lines.append(f"      if ({_c_name(sym)}()) return 1;")


def export_c_source(program: ParserProgram) -> str:
    """Emit a self-contained C translation unit for the compiled parser.

    One function per procedure, byte-stream lookahead, an element-hit
    bitmap keyed by the same element ids, and a main that reads all of
    standard input as the test input and prints one covered element id per
    line on exit (exit status 0 on accept, 1 on reject).
    """
    out = [
        "/* Auto-generated recursive-descent parser with element-hit instrumentation. */",
        "#include <stdio.h>",
        "#include <stdlib.h>",
        "",
        f"#define N_ELEMENTS {program.n_elements}",
        "#define TOK_EOI 256",
        "",
        "static unsigned char *inp;",
        "static size_t inp_len, pos;",
        "static unsigned char hit[N_ELEMENTS];",
        "",
        "static int look(void) { return pos < inp_len ? inp[pos] : TOK_EOI; }",
        "",
    ]
    for proc in program.procedures:
        out.append(f"static int {_c_name(proc.nonterminal)}(void);")
    out.append("")

    for proc in program.procedures:
        name = _c_name(proc.nonterminal)
        # Dispatch table: token -> local arm index, -1 for error.
        tbl = [-1] * TOKEN_DOMAIN_SIZE
        for idx, arm in enumerate(proc.arms):
            for tok in arm.predict:
                tbl[tok] = idx
        rows = [", ".join(str(v) for v in tbl[i:i + 16]) for i in range(0, TOKEN_DOMAIN_SIZE, 16)]
        out.append(f"static const short dispatch_{name}[{TOKEN_DOMAIN_SIZE}] = {{")
        for row in rows:
            out.append(f"  {row},")
        out.append("};")
        out.append(f"static int {name}(void) {{")
        out.append("  int a;")
        for dead_id in proc.dead_element_ids:
            out.append(f"  if (0) {{ hit[{dead_id}] = 1; }}")
        loop_arms = [i for i, arm in enumerate(proc.arms) if arm.is_loop]
        plain_arms = [i for i, arm in enumerate(proc.arms) if not arm.is_loop]
        out.append(f"  a = dispatch_{name}[look()];")
        if loop_arms:
            cond = " || ".join(f"a == {i}" for i in loop_arms)
            out.append(f"  while ({cond}) {{")
            for i in loop_arms:
                arm = proc.arms[i]
                kw = "if" if i == loop_arms[0] else "} else if"
                out.append(f"    {kw} (a == {i}) {{")
                out.append(f"      hit[{arm.element_id}] = 1;")
                _emit_arm_body(out, arm, proc, strip_tail_self=True)
            out.append("    }")
            out.append(f"    a = dispatch_{name}[look()];")
            out.append("  }")
        for i in plain_arms:
            arm = proc.arms[i]
            out.append(f"  if (a == {i}) {{")
            out.append(f"      hit[{arm.element_id}] = 1;")
            _emit_arm_body(out, arm, proc, strip_tail_self=False)
            out.append("      return 0;")
            out.append("  }")
        if loop_arms and not plain_arms:
            # All arms are loop arms: falling out of the loop is an error.
            pass
        out.append(f"  hit[{proc.error_element_id}] = 1;")
        out.append("  return 1;")
        out.append("}")
        out.append("")

    out += [
        "int main(void) {",
        "  size_t cap = 1u << 16;",
        "  size_t got;",
        "  unsigned i;",
        "  int err, ok;",
        "  inp = (unsigned char *)malloc(cap);",
        "  if (!inp) return 2;",
        "  inp_len = 0;",
        "  while ((got = fread(inp + inp_len, 1, cap - inp_len, stdin)) > 0) {",
        "    inp_len += got;",
        "    if (inp_len == cap) {",
        "      cap *= 2;",
        "      inp = (unsigned char *)realloc(inp, cap);",
        "      if (!inp) return 2;",
        "    }",
        "  }",
        f"  err = {_c_name(program.start)}();",
        "  ok = !err && pos == inp_len;",
        "  for (i = 0; i < N_ELEMENTS; i++)",
        '    if (hit[i]) printf("%u\\n", i);',
        "  free(inp);",
        "  return ok ? 0 : 1;",
        "}",
        "",
    ]
    return "\n".join(out)


def element_manifest(program: ParserProgram) -> str:
    """Element-id manifest: id, kind, origin, ground-truth flag (one line each)."""
    lines = ["elements v1"]
    for el in program.elements:
        flag = "reachable" if el.id in program.ground_truth else "unreachable"
        lines.append(f"{el.id} {el.kind} {el.origin} {flag}")
    return "\n".join(lines) + "\n"
