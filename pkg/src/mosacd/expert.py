"""Orientation seeding: prompt rendering, answer parsing, vote filtering.

An expert backend answers multiple-choice direction queries about undirected
skeleton edges.  Each query is asked ``repeats`` times under two answer
orders; a direction becomes a seed only when it wins the majority of direction
votes under *both* orders, which nulls out position-driven answers.  Accepted
seeds are further validated against the sepset record and the cycle guard
before being applied.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from mosacd.data import Metadata
from mosacd.graph import Dag, Pdag, has_semi_directed_path
from mosacd.skeleton import SepsetRecord

__all__ = [
    "FORWARD_ORDER",
    "REVERSED_ORDER",
    "TemplateError",
    "BackendError",
    "ExpertQuery",
    "VoteRecord",
    "Seed",
    "SeedSet",
    "SeedingConfig",
    "SeedingResult",
    "build_query",
    "render_prompt",
    "letter_claims",
    "parse_answer",
    "shuffled_vote",
    "validate_seed",
    "run_seeding",
    "ScriptedTruthExpert",
    "FirstOptionExpert",
    "ReplayBackend",
    "HttpChatBackend",
    "TranscriptLogger",
    "parse_backend_spec",
]

FORWARD_ORDER = "forward"
REVERSED_ORDER = "reversed"
ORDERS = (FORWARD_ORDER, REVERSED_ORDER)

VARIANT_FULL = "Full"
VARIANT_NONE2U = "None2u"
VARIANT_NONE2V = "None2v"
VARIANT_NONE = "None"


class TemplateError(ValueError):
    """A prompt placeholder could not be resolved."""


class BackendError(RuntimeError):
    """The expert backend failed to produce a usable response."""


# The answer-tag extractor: case-insensitive, tolerant of whitespace inside
# the tags, first match wins.
_ANSWER_RE = re.compile(r"<\s*answer\s*>\s*([ABCDE])\s*<\s*/\s*answer\s*>", re.I)


def parse_answer(text: str) -> str | None:
    """Extract the final choice letter, or None when no tag parses."""
    m = _ANSWER_RE.search(text)
    if m is None:
        return None
    return m.group(1).upper()


# -- prompt templates ---------------------------------------------------------
#
# Assembled from shared fragments so that the two answer orders differ only in
# the direction-bearing option lines.  Whitespace is deliberate, including the
# trailing spaces after "below:" and the final answer line.

_PREAMBLE_WITH_CONTEXT = (
    "You are a senior researcher in causal discovery. We are studying the following dataset:\n"
    "\n"
    "{data_desc}\n"
    "\n"
    "The two target variables under review are {u} and {v}.\n"
    "\n"
    "Conditional-independence tests mentioning these variables:\n"
    "\n"
    "{ci_bullets}\n"
    "\n"
    "Neighbour chain(s) that must normally remain non-collider:\n"
    "\n"
    "{chains}\n"
    "\n"
    "The nodes involved are described as below: \n"
    "\n"
    "{node_desc}\n"
    "\n"
)

_PREAMBLE_MINIMAL = (
    "You are a senior researcher in causal discovery. We are studying the following dataset:\n"
    "\n"
    "{data_desc}\n"
    "\n"
    "The two target variables under review are {u} and {v}.\n"
    "\n"
    "The nodes involved are described as below: \n"
    "\n"
    "{node_desc}\n"
    "\n"
)

_CHOOSE_DE = (
    "Choose one explanation that best fits domain knowledge and/or decides a CI test is "
    "unreliable (avoid selecting D or E unless other options are strongly against common sense):\n"
)
_CHOOSE_D = (
    "Choose one explanation that best fits domain knowledge and/or decides a CI test is "
    "unreliable (avoid selecting D unless other options are strongly against common sense):\n"
)
_CHOOSE_PLAIN = "Choose one explanation that best fits domain knowledge:\n"

_FOOTER = (
    "\n"
    "Think step-by-step before selecting:\n"
    "1. Mechanisms - What known causal pathways (biological, physical, etc.) support each direction?\n"
    "2. Counterfactual test - What would happen if we intervened on one node? What would we expect?\n"
    "3. Empirical check - Point to one key piece of information that favors/weakens a direction.\n"
    "4. Comparison - Briefly weigh {weigh} and choose the most plausible.\n"
    "\n"
    "Return exactly three lines:\n"
    "1. Reasoning in support of one direction.\n"
    "2. Reasoning against the weaker/less plausible direction.\n"
    "3. Final choice:  <Answer>{menu}</Answer> "
)

_OPT_UNDECIDED = "Undecided. We don't know enough to confidently pick a directionality."
_OPT_UV_CHAIN = (
    "Changing the state of {u} causally affects {v}, and {v} causally affects {u_theOther_2v}."
)
_OPT_VU_CHAIN = (
    "Changing the state of {v} causally affects {u}, and {u} causally affects {v_theOther_2u}."
)
_OPT_UV_BARE = "Changing the state of {u} causally affects {v}."
_OPT_VU_BARE = "Changing the state of {v} causally affects {u}."
_OPT_UV_VIOL = (
    "Changing the state of {u} causally affects {v}, and {u_theOther_2v} also causally "
    "affects {v}, **violating corresponding CI tests**."
)
_OPT_VU_VIOL = (
    "Changing the state of {v} causally affects {u}, and {v_theOther_2u} also causally "
    "affects {u}, **violating corresponding CI tests**."
)

# Per variant: preamble, chooser, forward option bodies with their direction
# claims ("uv" = first endpoint causes second, "vu" = the reverse, None = no
# direction).  The reversed order swaps the B/C bodies and, where both exist,
# the D/E bodies; claims travel with the bodies.
_VARIANT_SPEC = {
    VARIANT_FULL: dict(
        preamble=_PREAMBLE_WITH_CONTEXT,
        chooser=_CHOOSE_DE,
        options=[(_OPT_UV_CHAIN, "uv"), (_OPT_VU_CHAIN, "vu"), (_OPT_UV_VIOL, "uv"), (_OPT_VU_VIOL, "vu")],
    ),
    VARIANT_NONE2U: dict(
        preamble=_PREAMBLE_WITH_CONTEXT,
        chooser=_CHOOSE_D,
        options=[(_OPT_UV_CHAIN, "uv"), (_OPT_VU_BARE, "vu"), (_OPT_UV_VIOL, "uv")],
    ),
    VARIANT_NONE2V: dict(
        preamble=_PREAMBLE_WITH_CONTEXT,
        chooser=_CHOOSE_D,
        options=[(_OPT_UV_BARE, "uv"), (_OPT_VU_CHAIN, "vu"), (_OPT_VU_VIOL, "vu")],
    ),
    VARIANT_NONE: dict(
        preamble=_PREAMBLE_MINIMAL,
        chooser=_CHOOSE_PLAIN,
        options=[(_OPT_UV_BARE, "uv"), (_OPT_VU_BARE, "vu")],
    ),
}


def _ordered_options(variant: str, order: str) -> list[tuple[str, str]]:
    options = list(_VARIANT_SPEC[variant]["options"])
    if order == REVERSED_ORDER:
        options[0], options[1] = options[1], options[0]
        if len(options) == 4:
            options[2], options[3] = options[3], options[2]
    elif order != FORWARD_ORDER:
        raise ValueError(f"unknown answer order {order!r}")
    return options


def option_letters(variant: str) -> list[str]:
    return ["A", "B", "C", "D", "E"][: 1 + len(_VARIANT_SPEC[variant]["options"])]


def letter_claims(variant: str, order: str) -> dict[str, str | None]:
    """Map each option letter of the rendered prompt to its direction claim."""
    claims: dict[str, str | None] = {"A": None}
    for letter, (_, claim) in zip("BCDE", _ordered_options(variant, order)):
        claims[letter] = claim
    return claims


@dataclass
class ExpertQuery:
    """Everything needed to render one edge-direction question."""

    u: int
    v: int
    u_name: str
    v_name: str
    data_desc: str
    node_desc: str
    ci_bullets: str
    chains: str
    variant: str
    chain_from_u: str | None = None  # continuation of u -> v ({u_theOther_2v})
    chain_from_v: str | None = None  # continuation of v -> u ({v_theOther_2u})

    @property
    def pair(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


def render_prompt(query: ExpertQuery, order: str = FORWARD_ORDER) -> str:
    """Instantiate the query's template variant; byte-stable for fixed inputs."""
    spec = _VARIANT_SPEC[query.variant]
    subs = {
        "u": query.u_name,
        "v": query.v_name,
        "data_desc": query.data_desc,
        "node_desc": query.node_desc,
        "ci_bullets": query.ci_bullets,
        "chains": query.chains,
        "u_theOther_2v": query.chain_from_u,
        "v_theOther_2u": query.chain_from_v,
    }
    letters = option_letters(query.variant)
    lines = [f"A. {_OPT_UNDECIDED}"]
    for letter, (body, _) in zip(letters[1:], _ordered_options(query.variant, order)):
        lines.append(f"{letter}. {body}")
    template = (
        spec["preamble"]
        + spec["chooser"]
        + "\n"
        + "\n".join(lines)
        + "\n"
        + _FOOTER.format(weigh=" vs ".join(letters), menu="/".join(letters))
    )
    needed = set(re.findall(r"{(\w+)}", template))
    for name in sorted(needed):
        if subs.get(name) is None:
            raise TemplateError(
                f"placeholder {{{name}}} unresolved for variant {query.variant}"
            )
    return template.format(**{k: subs[k] for k in needed})


# -- query construction -------------------------------------------------------


def _chain_continuation(p: Pdag, sigma: SepsetRecord, a: int, b: int) -> int | None:
    """Node w making a - b - w an unshielded triple whose center b separates a, w.

    Such a chain must stay non-collider at b, so orienting a -> b commits
    b -> w; it is the ancillary context the richer templates talk about.
    """
    for w in sorted(p.neighbors(b) - {a}):
        if p.adjacent(a, w):
            continue
        if sigma.membership(b, a, w) == "all":
            return w
    return None


def _format_p(p: float) -> str:
    return f"{p:.3g}"


def build_query(
    p: Pdag,
    sigma: SepsetRecord,
    names: Sequence[str],
    meta: Metadata,
    u: int,
    v: int,
) -> ExpertQuery:
    """Assemble the prompt context for edge {u, v} from skeleton and sepsets.

    Bullet syntax (fixed so runs are comparable):
      - CI entry:  "- A _||_ B | {C, D} (p=0.93)" with "{}" for the empty set
      - chain:     "- A - B - C: B must not be a common effect of A and C."
    """
    if not p.is_undirected(u, v):
        raise ValueError(f"edge ({u}, {v}) is not undirected in the current graph")
    chain_u = _chain_continuation(p, sigma, u, v)
    chain_v = _chain_continuation(p, sigma, v, u)
    if chain_u is not None and chain_v is not None:
        variant = VARIANT_FULL
    elif chain_u is not None:
        variant = VARIANT_NONE2U
    elif chain_v is not None:
        variant = VARIANT_NONE2V
    else:
        variant = VARIANT_NONE

    bullets = []
    for a, b in sigma.pairs():
        if u not in (a, b) and v not in (a, b):
            continue
        for entry in sigma.entries(a, b):
            inner = ", ".join(names[w] for w in sorted(entry.sepset))
            bullets.append(
                f"- {names[a]} _||_ {names[b]} | {{{inner}}} (p={_format_p(entry.p_value)})"
            )
    ci_bullets = "\n".join(bullets) if bullets else "- (none recorded)"

    chain_lines = []
    if chain_u is not None:
        chain_lines.append(
            f"- {names[u]} - {names[v]} - {names[chain_u]}: {names[v]} must not be "
            f"a common effect of {names[u]} and {names[chain_u]}."
        )
    if chain_v is not None:
        chain_lines.append(
            f"- {names[v]} - {names[u]} - {names[chain_v]}: {names[u]} must not be "
            f"a common effect of {names[v]} and {names[chain_v]}."
        )
    chains = "\n".join(chain_lines) if chain_lines else "- (none)"

    described = [u, v] + [w for w in (chain_u, chain_v) if w is not None]
    node_desc = "\n".join(
        f"- {names[w]}: {meta.description_for(names[w])}" for w in dict.fromkeys(described)
    )

    return ExpertQuery(
        u=u,
        v=v,
        u_name=names[u],
        v_name=names[v],
        data_desc=meta.data_desc or "(no dataset description provided)",
        node_desc=node_desc,
        ci_bullets=ci_bullets,
        chains=chains,
        variant=variant,
        chain_from_u=names[chain_u] if chain_u is not None else None,
        chain_from_v=names[chain_v] if chain_v is not None else None,
    )


# -- voting --------------------------------------------------------------------


@dataclass
class VoteRecord:
    """Per answer order: letter counts, parse failures, and raw transcripts."""

    repeats: int
    variant: str = VARIANT_NONE
    letters: dict[str, Counter] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    transcripts: dict[str, list[str]] = field(default_factory=dict)

    def record(self, order: str, letter: str | None, text: str, valid: set[str]) -> None:
        self.letters.setdefault(order, Counter())
        self.failures.setdefault(order, 0)
        self.transcripts.setdefault(order, []).append(text)
        if letter is not None and letter in valid:
            self.letters[order][letter] += 1
        else:
            self.failures[order] += 1

    def total(self, order: str) -> int:
        return sum(self.letters.get(order, Counter()).values()) + self.failures.get(order, 0)

    def direction_counts(self, variant: str, order: str) -> Counter:
        claims = letter_claims(variant, order)
        counts: Counter = Counter()
        for letter, n in self.letters.get(order, Counter()).items():
            claim = claims.get(letter)
            if claim is not None:
                counts[claim] += n
        return counts


@dataclass(frozen=True)
class Seed:
    u: int      # tail
    v: int      # head: the seed claims u -> v
    votes: VoteRecord


@dataclass
class SeedSet:
    seeds: list[Seed] = field(default_factory=list)

    def __iter__(self):
        return iter(self.seeds)

    def __len__(self):
        return len(self.seeds)

    def directed_pairs(self) -> list[tuple[int, int]]:
        return [(s.u, s.v) for s in self.seeds]

    def to_json(self, names: Sequence[str] | None = None) -> str:
        def label(i):
            return names[i] if names is not None else i

        payload = [
            {
                "from": label(s.u),
                "to": label(s.v),
                "votes": {
                    order: dict(s.votes.letters.get(order, {}))
                    for order in s.votes.letters
                },
            }
            for s in self.seeds
        ]
        return json.dumps(payload, indent=2)


def _majority_claim(votes: VoteRecord, variant: str, order: str) -> str | None:
    counts = votes.direction_counts(variant, order)
    uv, vu = counts.get("uv", 0), counts.get("vu", 0)
    if uv > vu:
        return "uv"
    if vu > uv:
        return "vu"
    return None


def shuffled_vote(
    query: ExpertQuery,
    backend,
    repeats: int = 5,
    *,
    filter_positional_bias: bool = True,
    logger: "TranscriptLogger | None" = None,
) -> tuple[tuple[int, int] | None, VoteRecord]:
    """Query both answer orders `repeats` times and take the double majority.

    Returns (directed edge or None for abstain, full vote record).  With the
    positional-bias filter disabled, only the forward order decides — the
    ablation arm the filter is measured against.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    votes = VoteRecord(repeats=repeats, variant=query.variant)
    valid = set(option_letters(query.variant))
    orders = ORDERS if filter_positional_bias else (FORWARD_ORDER,)
    for order in orders:
        prompt = render_prompt(query, order)
        for trial in range(repeats):
            try:
                text = backend.respond(query, order, prompt, trial)
            except BackendError:
                raise
            except Exception as exc:
                raise BackendError(
                    f"backend failed on edge ({query.u_name}, {query.v_name}), "
                    f"order {order}, trial {trial}: {exc}"
                ) from exc
            letter = parse_answer(text)
            votes.record(order, letter, text, valid)
            if logger is not None:
                logger.log(query, order, trial, prompt, text, letter)

    majorities = {order: _majority_claim(votes, query.variant, order) for order in orders}
    first = majorities[orders[0]]
    if first is None or any(m != first for m in majorities.values()):
        return None, votes
    edge = (query.u, query.v) if first == "uv" else (query.v, query.u)
    return edge, votes


# -- seed validation -----------------------------------------------------------


def validate_seed(
    p: Pdag, sigma: SepsetRecord, u: int, v: int
) -> tuple[bool, str | None]:
    """Accept or reject the proposed arrow u -> v against the current graph.

    Rejections: opening a collider at a center that separates its endpoints;
    finalizing a non-collider at a center that never separates them; closing
    a directed or semi-directed cycle.
    """
    if not p.is_undirected(u, v):
        return False, "edge is not undirected in the current graph"
    if has_semi_directed_path(p, v, u, skip_pair=(u, v)):
        return False, "would create a directed or semi-directed cycle"
    for w in sorted(p.neighbors(v) - {u}):
        if p.adjacent(u, w):
            continue
        membership = sigma.membership(v, u, w)
        if p.has_arrow(w, v) and membership == "all":
            return False, (
                f"opens collider at {v} for pair ({u}, {w}) although {v} "
                f"separates them in every recorded sepset"
            )
        if p.has_arrow(v, w) and membership == "none":
            return False, (
                f"finalizes non-collider at {v} for pair ({u}, {w}) although {v} "
                f"appears in no recorded sepset"
            )
    for w in sorted(p.neighbors(u) - {v}):
        if p.adjacent(v, w):
            continue
        if sigma.membership(u, v, w) == "none":
            return False, (
                f"makes {u} a definite non-collider for pair ({v}, {w}) although "
                f"{u} appears in no recorded sepset"
            )
    return True, None


# -- seeding driver --------------------------------------------------------------


@dataclass
class SeedingConfig:
    repeats: int = 5
    filter_positional_bias: bool = True
    jobs: int = 1


@dataclass
class SeedingResult:
    pdag: Pdag
    seeds: SeedSet
    all_votes: list[tuple[tuple[int, int], tuple[int, int] | None, VoteRecord]]
    rejected: list[tuple[tuple[int, int], str]]
    errors: list[str]

    def counts(self) -> dict[str, int]:
        abstain = sum(1 for _, decision, _ in self.all_votes if decision is None)
        return {
            "accepted": len(self.seeds),
            "rejected": len(self.rejected),
            "abstain": abstain,
        }


def run_seeding(
    p: Pdag,
    sigma: SepsetRecord,
    backend,
    names: Sequence[str],
    meta: Metadata,
    config: SeedingConfig | None = None,
    logger: "TranscriptLogger | None" = None,
) -> SeedingResult:
    """Vote on every undirected edge, validate decisions, apply seeds in order.

    Queries depend only on skeleton and sepsets, so the query phase may run
    concurrently; validation and application stay sequential in deterministic
    edge order, applying each accepted seed before validating the next.
    """
    config = config or SeedingConfig()
    edges = list(p.undirected_edges())
    queries = []
    errors: list[str] = []
    for u, v in edges:
        try:
            queries.append(build_query(p, sigma, names, meta, u, v))
        except Exception as exc:
            queries.append(None)
            errors.append(f"query build failed for ({names[u]}, {names[v]}): {exc}")

    def ask(query):
        if query is None:
            return None
        return shuffled_vote(
            query,
            backend,
            config.repeats,
            filter_positional_bias=config.filter_positional_bias,
            logger=logger,
        )

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(ask, queries))
    else:
        outcomes = []
        for query in queries:
            try:
                outcomes.append(ask(query))
            except BackendError as exc:
                outcomes.append(None)
                errors.append(str(exc))

    g = p.copy()
    seeds = SeedSet()
    all_votes = []
    rejected = []
    for (a, b), outcome in zip(edges, outcomes):
        if outcome is None:
            continue
        decision, votes = outcome
        all_votes.append(((a, b), decision, votes))
        if decision is None:
            continue
        tail, head = decision
        ok, reason = validate_seed(g, sigma, tail, head)
        if not ok:
            rejected.append(((tail, head), reason))
            continue
        g._set_arrow(tail, head)
        seeds.seeds.append(Seed(u=tail, v=head, votes=votes))
    return SeedingResult(pdag=g, seeds=seeds, all_votes=all_votes, rejected=rejected, errors=errors)


# -- backends ---------------------------------------------------------------------


def _edge_draw(u: int, v: int, seed: int, salt: str) -> float:
    lo, hi = (u, v) if u < v else (v, u)
    key = f"{salt}|{lo}|{hi}|{seed}"
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


class ScriptedTruthExpert:
    """Offline expert that knows a ground-truth DAG.

    Commits to one answer per edge (hash-seeded), so all repeated trials in
    both orders agree: with probability ``abstain_rate`` it stays undecided,
    otherwise it claims the true direction, flipped with probability
    ``error_rate``.  Edges absent from the truth graph get an abstention.
    """

    def __init__(self, dag: Dag, abstain_rate: float = 0.0, error_rate: float = 0.0, seed: int = 0):
        self.dag = dag
        self.abstain_rate = float(abstain_rate)
        self.error_rate = float(error_rate)
        self.seed = int(seed)

    def claim_for_edge(self, u: int, v: int) -> str | None:
        if _edge_draw(u, v, self.seed, "abstain") < self.abstain_rate:
            return None
        if (u, v) in self.dag.edges:
            claim = "uv"
        elif (v, u) in self.dag.edges:
            claim = "vu"
        else:
            return None
        if _edge_draw(u, v, self.seed, "error") < self.error_rate:
            claim = "vu" if claim == "uv" else "uv"
        return claim

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        claim = self.claim_for_edge(query.u, query.v)
        if claim is None:
            return "Insufficient evidence either way.\nNothing to weigh.\nFinal choice:  <Answer>A</Answer>"
        for letter, mapped in letter_claims(query.variant, order).items():
            if mapped == claim:
                return (
                    "Domain mechanism supports this direction.\n"
                    "The reverse lacks a plausible mechanism.\n"
                    f"Final choice:  <Answer>{letter}</Answer>"
                )
        return "Insufficient evidence either way.\nNothing to weigh.\nFinal choice:  <Answer>A</Answer>"


class FirstOptionExpert:
    """Pure positional bias: always picks the first direction-bearing option."""

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        return "It reads plausibly.\nNo strong counterargument.\nFinal choice:  <Answer>B</Answer>"


class MaskSensitiveTruthExpert(ScriptedTruthExpert):
    """Truth expert that abstains when an endpoint's description is masked.

    Desk-scale stand-in for description-dependent knowledge: the uninformative
    sentinel in the rendered node descriptions suppresses the answer.
    """

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        from mosacd.data import UNINFORMATIVE_DESCRIPTION

        for name in (query.u_name, query.v_name):
            if f"- {name}: {UNINFORMATIVE_DESCRIPTION}" in query.node_desc:
                return "The variables are opaque.\nNothing to weigh.\nFinal choice:  <Answer>A</Answer>"
        return super().respond(query, order, prompt, trial)


class InjectedSeedExpert:
    """Answers fixed directions for chosen pairs; abstains everywhere else.

    Used by ablations that inject a controlled set of (possibly false) seeds
    through the regular voting and validation machinery.
    """

    def __init__(self, decisions: dict[tuple[int, int], tuple[int, int]]):
        # map unordered pair -> directed (tail, head)
        self._decisions = {tuple(sorted(k)): v for k, v in decisions.items()}

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        directed = self._decisions.get(query.pair)
        if directed is None:
            return "Out of scope.\nNothing to weigh.\nFinal choice:  <Answer>A</Answer>"
        claim = "uv" if directed == (query.u, query.v) else "vu"
        for letter, mapped in letter_claims(query.variant, order).items():
            if mapped == claim:
                return f"Injected.\nInjected.\nFinal choice:  <Answer>{letter}</Answer>"
        return "Out of scope.\nNothing to weigh.\nFinal choice:  <Answer>A</Answer>"


class ReplayBackend:
    """Serve logged responses back, keyed by (edge, variant, order, trial)."""

    def __init__(self, path):
        self._responses: dict[tuple, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                key = (tuple(rec["edge"]), rec["variant"], rec["order"], rec["trial"])
                self._responses[key] = rec["response_text"]

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        key = ((query.u_name, query.v_name), query.variant, order, trial)
        if key not in self._responses:
            raise BackendError(f"no logged response for {key}")
        return self._responses[key]


class HttpChatBackend:
    """Generic chat-completion HTTP backend (OpenAI-style payload).

    The API key is read from a named environment variable, never passed as a
    flag.  Retries with exponential backoff; transcripts should be captured by
    the seeding logger for replayability.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "MOSACD_API_KEY",
        temperature: float = 0.0,
        max_retries: int = 3,
        timeout: float = 60.0,
        backoff: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.max_retries = max_retries
        self.timeout = timeout
        self.backoff = backoff

    def respond(self, query: ExpertQuery, order: str, prompt: str, trial: int) -> str:
        import os

        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendError(f"environment variable {self.api_key_env} is not set")
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers={"Authorization": f"Bearer {key}"},
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = exc
                time.sleep(self.backoff * 2**attempt)
        raise BackendError(f"LLM request failed after {self.max_retries} attempts: {last_error}")


class TranscriptLogger:
    """JSON-lines trial log; one record per backend call."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def log(self, query: ExpertQuery, order: str, trial: int, prompt: str, text: str, letter):
        record = {
            "edge": [query.u_name, query.v_name],
            "variant": query.variant,
            "order": order,
            "trial": trial,
            "prompt_hash": hashlib.sha256(prompt.encode()).hexdigest(),
            "response_text": text,
            "parsed_letter": letter,
            "timestamp": time.time(),
        }
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_backend_spec(spec: str, truth: Dag | None = None):
    """Build a backend from a CLI-style spec string.

    Forms: ``none``, ``scripted:truth,abstain=0.2,error=0.1,seed=7``,
    ``scripted:first-option``, ``replay:<path>``,
    ``llm:base_url=...,model=...[,key_env=...,temperature=...]``.
    """
    if spec == "none":
        return None
    kind, _, rest = spec.partition(":")
    if kind == "scripted":
        parts = [p for p in rest.split(",") if p]
        if not parts:
            raise ValueError("scripted backend needs a mode, e.g. scripted:truth")
        mode, *opts = parts
        kwargs = {}
        for opt in opts:
            k, _, val = opt.partition("=")
            kwargs[k] = val
        if mode == "truth":
            if truth is None:
                raise ValueError("scripted:truth requires a ground-truth network")
            return ScriptedTruthExpert(
                truth,
                abstain_rate=float(kwargs.get("abstain", 0.0)),
                error_rate=float(kwargs.get("error", 0.0)),
                seed=int(kwargs.get("seed", 0)),
            )
        if mode == "first-option":
            return FirstOptionExpert()
        raise ValueError(f"unknown scripted expert mode {mode!r}")
    if kind == "replay":
        return ReplayBackend(rest)
    if kind == "llm":
        kwargs = {}
        for opt in rest.split(","):
            if not opt:
                continue
            k, _, val = opt.partition("=")
            kwargs[k] = val
        if "base_url" not in kwargs or "model" not in kwargs:
            raise ValueError("llm backend requires base_url=... and model=...")
        return HttpChatBackend(
            base_url=kwargs["base_url"],
            model=kwargs["model"],
            api_key_env=kwargs.get("key_env", "MOSACD_API_KEY"),
            temperature=float(kwargs.get("temperature", 0.0)),
            max_retries=int(kwargs.get("retries", 3)),
        )
    raise ValueError(f"unknown expert backend spec {spec!r}")
