"""Arc-eager dependency parsing over synthetic token sequences.

Tokens are numbered ``1..n``; head ``0`` denotes the root.  The stack starts
empty, an episode ends when the buffer is empty, and tokens left without a
head are attached to the root when the parse is finalized.

The synthetic corpus comes from a small head-direction grammar over six
word categories (verb, noun, determiner, adjective, preposition, adverb).
A word's category is ``id % 6``, so a vocabulary of ``6k`` ids holds ``k``
interchangeable words per category.  Trees are projective and single-rooted
by construction.
"""
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigurationError, DataError, TransitionError
from ..mdp import Trajectory

SHIFT, REDUCE, LEFT_ARC, RIGHT_ARC = 0, 1, 2, 3
ACTIONS = ("shift", "reduce", "left-arc", "right-arc")
NUM_ACTIONS = 4

VERB, NOUN, DET, ADJ, PREP, ADV = range(6)
NUM_CATEGORIES = 6


@dataclass(frozen=True)
class Sentence:
    tokens: tuple      # vocabulary id of tokens 1..n
    heads: tuple       # gold head of tokens 1..n (0 = root)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class ParserState:
    sentence: Sentence
    stack: tuple
    buffer: tuple
    heads: tuple       # predicted head per token, index 0 unused, -1 = none

    @classmethod
    def initial(cls, sentence):
        n = len(sentence)
        return cls(sentence, (), tuple(range(1, n + 1)), (-1,) * (n + 1))

    @property
    def terminal(self):
        return not self.buffer

    @property
    def arcs(self):
        return {(h, d) for d, h in enumerate(self.heads) if d > 0 and h >= 0}

    def has_head(self, token):
        return self.heads[token] >= 0


def legal_actions(state):
    """Boolean mask over (shift, reduce, left-arc, right-arc)."""
    mask = np.zeros(NUM_ACTIONS, dtype=bool)
    if state.terminal:
        return mask
    mask[SHIFT] = True
    if state.stack:
        top_attached = state.has_head(state.stack[-1])
        mask[REDUCE] = top_attached
        mask[LEFT_ARC] = not top_attached
        mask[RIGHT_ARC] = True
    return mask


def arc_eager_step(state, action):
    """Apply one transition; raises ``TransitionError`` if it is illegal."""
    action = int(action)
    if not 0 <= action < NUM_ACTIONS or not legal_actions(state)[action]:
        name = ACTIONS[action] if 0 <= action < NUM_ACTIONS else action
        raise TransitionError(f"{name} is illegal in this configuration")
    stack, buffer, heads = state.stack, state.buffer, list(state.heads)
    if action == SHIFT:
        return replace(state, stack=stack + (buffer[0],), buffer=buffer[1:])
    if action == REDUCE:
        return replace(state, stack=stack[:-1])
    if action == LEFT_ARC:
        heads[stack[-1]] = buffer[0]
        return replace(state, stack=stack[:-1], heads=tuple(heads))
    heads[buffer[0]] = stack[-1]
    return replace(state, stack=stack + (buffer[0],), buffer=buffer[1:], heads=tuple(heads))


def finalize(state):
    """Arc set with every head-less token attached to the root."""
    return {(max(h, 0), d) for d, h in enumerate(state.heads) if d > 0}


def uas(predicted_arcs, gold_heads):
    """Fraction of tokens whose predicted head equals the gold head.

    ``gold_heads[i - 1]`` is the head of token ``i``; a token with no arc in
    ``predicted_arcs`` counts as wrong.
    """
    n = len(gold_heads)
    if n == 0:
        raise DataError("empty sentence")
    pred = {}
    for h, d in predicted_arcs:
        pred[d] = h
    return sum(pred.get(i + 1, -1) == g for i, g in enumerate(gold_heads)) / n


def reachable_arcs(state):
    """Number of gold arcs the best completion of ``state`` can still get.

    An arc that is already built counts if correct.  For a head-less
    dependent: a root arc stays reachable; otherwise the gold head must sit
    in the buffer, or in the stack while the dependent is still in the
    buffer.  Arc-eager is arc-decomposable, so these arcs are jointly
    reachable.
    """
    sent = state.sentence
    where = {}
    for tok in state.stack:
        where[tok] = "stack"
    for tok in state.buffer:
        where[tok] = "buffer"
    count = 0
    for d, g in enumerate(sent.heads, start=1):
        h = state.heads[d]
        if h >= 0:
            count += h == g
        elif g == 0:
            count += 1
        elif where.get(g) == "buffer" or (where.get(g) == "stack" and where.get(d) == "buffer"):
            count += 1
    return count


def action_costs(state):
    """Gold arcs lost by each legal action (``inf`` for illegal ones)."""
    base = reachable_arcs(state)
    mask = legal_actions(state)
    out = np.full(NUM_ACTIONS, np.inf)
    for a in np.flatnonzero(mask):
        out[a] = base - reachable_arcs(arc_eager_step(state, a))
    return out


_PREFERENCE = (LEFT_ARC, RIGHT_ARC, REDUCE, SHIFT)


def oracle_action(state):
    """Zero-cost action, preferring arcs, then reduce, then shift."""
    costs = action_costs(state)
    best = costs.min()
    for a in _PREFERENCE:
        if costs[a] == best:
            return a
    raise TransitionError("no legal action in a terminal configuration")


def parse_with(policy_fn, state):
    """Run ``policy_fn(state) -> action`` to the end; returns the final state
    and the list of actions taken."""
    actions = []
    while not state.terminal:
        a = policy_fn(state)
        actions.append(a)
        state = arc_eager_step(state, a)
    return state, actions


def oracle_sequence(sentence):
    return parse_with(oracle_action, ParserState.initial(sentence))[1]


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


class _Builder:
    def __init__(self, rng, vocab):
        self.rng = rng
        self.per_cat = vocab // NUM_CATEGORIES
        self.tokens = []
        self.heads = []

    def word(self, cat, head):
        self.tokens.append(cat + NUM_CATEGORIES * int(self.rng.integers(self.per_cat)))
        self.heads.append(head)
        return len(self.tokens)

    def noun_phrase(self, head, depth):
        # dependents placed before the noun get patched once its index is known
        pre = []
        if self.rng.random() < 0.6:
            pre.append(self.word(DET, None))
        for _ in range(int(self.rng.integers(0, 3))):
            pre.append(self.word(ADJ, None))
        noun = self.word(NOUN, head)
        for i in pre:
            self.heads[i - 1] = noun
        if depth < 2 and self.rng.random() < 0.3:
            prep = self.word(PREP, noun)
            self.noun_phrase(prep, depth + 1)
        return noun

    def sentence(self):
        subject = self.rng.random() < 0.85
        subj = self.noun_phrase(None, 0) if subject else None
        verb = self.word(VERB, 0)
        if subj is not None:
            self.heads[subj - 1] = verb
        if self.rng.random() < 0.8:
            self.noun_phrase(verb, 0)
        if self.rng.random() < 0.4:
            self.word(ADV, verb)
        return Sentence(tuple(self.tokens), tuple(self.heads))


def make_parse_corpus(num_sentences, max_len, vocab, seed):
    """Reproducible list of ``Sentence`` with 2 <= length <= ``max_len``."""
    if max_len < 2:
        raise ConfigurationError("max_len must be at least 2")
    if vocab < NUM_CATEGORIES:
        raise ConfigurationError(f"vocabulary needs at least {NUM_CATEGORIES} ids")
    from ..streams import CORPUS, substream
    rng = substream(seed, CORPUS)
    corpus = []
    while len(corpus) < num_sentences:
        sent = _Builder(rng, vocab).sentence()
        if 2 <= len(sent) <= max_len:
            corpus.append(sent)
    return corpus


def is_projective(heads):
    """True when no two arcs cross (root arcs included) and there is one root."""
    arcs = [(min(h, d), max(h, d)) for d, h in enumerate(heads, start=1)]
    if sum(h == 0 for h in heads) != 1:
        return False
    for i, (a, b) in enumerate(arcs):
        for c, d in arcs[i + 1:]:
            if a < c < b < d or c < a < d < b:
                return False
    return True


def write_corpus(path, corpus):
    """One sentence per line, tab-separated ``token:head`` pairs."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for sent in corpus:
            fh.write("\t".join(f"{t}:{h}" for t, h in zip(sent.tokens, sent.heads)) + "\n")


def read_corpus(path):
    corpus = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                pairs = [field.split(":") for field in line.split("\t")]
                tokens = tuple(int(t) for t, _ in pairs)
                heads = tuple(int(h) for _, h in pairs)
            except ValueError as exc:
                raise DataError(f"line {lineno}: malformed token:head pair") from exc
            corpus.append(Sentence(tokens, heads))
    return corpus


# ---------------------------------------------------------------------------
# MDP view
# ---------------------------------------------------------------------------


class ParseFeaturizer:
    """Concatenated one-hot vocabulary ids of the three most recent stack,
    buffer and arc items, plus attachment tags for the top two stack items.

    Each slot has ``vocab + 1`` entries; the last marks an empty slot.  Arc
    slots hold the dependent of the three most recently built arcs.
    """

    SLOTS = 9

    def __init__(self, vocab):
        self.vocab = vocab
        self.width = vocab + 1
        self.dim = self.SLOTS * self.width + 2

    def __call__(self, state, t=None):
        x = np.zeros(self.dim)
        toks = state.sentence.tokens
        stack, buffer = state.stack, state.buffer
        arcs = sorted((d for d, h in enumerate(state.heads) if d > 0 and h >= 0),
                      key=lambda d: -d)
        items = [stack[-1 - i] if i < len(stack) else None for i in range(3)]
        items += [buffer[i] if i < len(buffer) else None for i in range(3)]
        items += [arcs[i] if i < len(arcs) else None for i in range(3)]
        for slot, tok in enumerate(items):
            x[slot * self.width + (self.vocab if tok is None else toks[tok - 1])] = 1.0
        base = self.SLOTS * self.width
        for i in range(2):
            if len(stack) > i and state.has_head(stack[-1 - i]):
                x[base + i] = 1.0
        return x


def parse_mask(state, t=None):
    return legal_actions(state)


class OracleParsePolicy:
    """Deterministic clairvoyant expert as a policy over parser states."""

    def action_probs(self, state, t):
        p = np.zeros(NUM_ACTIONS)
        if not state.terminal:
            p[oracle_action(state)] = 1.0
        return p


class ParseEnv:
    """Episodic MDP: each episode parses one corpus sentence drawn uniformly;
    the only cost, ``1 - UAS``, arrives at the final step."""

    num_actions = NUM_ACTIONS

    def __init__(self, corpus):
        if not corpus:
            raise ConfigurationError("empty corpus")
        self.corpus = list(corpus)
        self.horizon = 2 * max(len(s) for s in self.corpus)

    def rollout(self, policy, rng, sentence=None):
        if sentence is None:
            sentence = self.corpus[int(rng.integers(len(self.corpus)))]
        state = ParserState.initial(sentence)
        states, actions, probs = [], [], []
        t = 0
        while not state.terminal:
            p = policy.action_probs(state, t)
            a = int(rng.choice(NUM_ACTIONS, p=p))
            states.append(state)
            actions.append(a)
            probs.append(float(p[a]))
            state = arc_eager_step(state, a)
            t += 1
        costs = np.zeros(len(actions))
        costs[-1] = 1.0 - uas(finalize(state), sentence.heads)
        return Trajectory(states, actions, costs, np.array(probs))


def greedy_uas(policy, corpus):
    """Mean UAS of argmax decoding with a differentiable policy."""
    def act(state):
        return int(np.argmax(policy.action_probs(state, 0)))

    total = 0.0
    for sent in corpus:
        final, _ = parse_with(act, ParserState.initial(sent))
        total += uas(finalize(final), sent.heads)
    return total / len(corpus)
