"""Full tracker network: encoder, operation predictor, copy-gated generator.

Input tokens are embedded (token + position + segment), run through L
transformer blocks — the last block(s) optionally graph-enhanced — then each
pair's [SLOT] vector classifies a state operation, and pairs classified
UPDATE receive a value from a GRU decoder that mixes a vocabulary softmax
with a copy distribution over input positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from statetrack.corpus import (
    NULL_VALUE,
    Dialogue,
    DialogueState,
    DialogueTurn,
    Schema,
    Vocabulary,
    tokenize,
)
from statetrack.graph import (
    GraphEmbeddings,
    StateGraph,
    build_state_graph,
    fuse,
    graph_attention_gcls,
    rgcn_update,
)
from statetrack.numerics import (
    ParamStore,
    Tensor,
    affine,
    concat,
    dropout,
    gelu,
    gru_step,
    layer_norm,
    log_softmax,
    multi_head_attention,
    no_grad,
    scatter_add_rows,
    softmax,
)
from statetrack.state import (
    N_OPERATIONS,
    EncodedInput,
    StateOperation,
    apply_operations,
    derive_operations,
    serialize_input,
    serialize_input_packed,
)

LOG_EPS = 1e-12  # floor inside log() of the mixed copy/vocab distribution


@dataclass
class ModelConfig:
    d_h: int = 64
    n_heads: int = 4
    n_layers: int = 3
    d_ff: int = 0                # 0 -> 4 * d_h
    use_graph: bool = True
    n_graph_blocks: int = 1
    n_gcn_layers: int = 1
    graph_query: str = "cls"     # or "slot"
    update_placeholders: bool = False
    packed_positions: bool = False  # sequential ids instead of span anchoring
    max_seq_len: int = 512
    max_decode_len: int = 6
    dropout: float = 0.1
    vocab_size: int = 0

    def __post_init__(self) -> None:
        if self.d_ff == 0:
            self.d_ff = 4 * self.d_h
        self.validate()

    def validate(self) -> None:
        if self.d_h % self.n_heads:
            raise ValueError(f"d_h={self.d_h} not divisible by n_heads={self.n_heads}")
        if self.n_graph_blocks not in (1, 2):
            raise ValueError("n_graph_blocks must be 1 or 2")
        if self.n_gcn_layers not in (1, 2):
            raise ValueError("n_gcn_layers must be 1 or 2")
        if self.n_graph_blocks > self.n_layers:
            raise ValueError("n_graph_blocks cannot exceed n_layers")
        if self.graph_query not in ("cls", "slot"):
            raise ValueError("graph_query must be 'cls' or 'slot'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_decode_len < 1:
            raise ValueError("max_decode_len must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def graph_block_indices(self) -> range:
        if not self.use_graph:
            return range(0)
        return range(self.n_layers - self.n_graph_blocks, self.n_layers)


# ---------------------------------------------------------------------------
# Parameter construction
# ---------------------------------------------------------------------------

def build_params(config: ModelConfig, schema: Schema, vocab: Vocabulary,
                 seed: int) -> ParamStore:
    """Create all trainable tensors.

    Initialization is keyed by name, so configurations sharing a name (for
    example with and without the graph component) start from identical
    values; graph parameters simply do not exist when use_graph is off.
    Sets ``config.vocab_size`` as a side effect.
    """
    config.vocab_size = len(vocab)
    cfg = config
    p = ParamStore()
    d, d_ff = cfg.d_h, cfg.d_ff
    p.create("enc.tok_emb", (len(vocab), d), seed)
    p.create("enc.pos_emb", (cfg.max_seq_len, d), seed)
    p.create("enc.seg_emb", (2, d), seed)
    for i in range(cfg.n_layers):
        for proj in ("w_q", "w_k", "w_v"):
            p.create(f"enc.l{i}.attn.{proj}", (d, d), seed)
        for ln in ("ln1", "ln2"):
            p.create(f"enc.l{i}.{ln}.gain", (d,), seed, kind="one")
            p.create(f"enc.l{i}.{ln}.bias", (d,), seed, kind="zero")
        p.create(f"enc.l{i}.ffn.w1", (d, d_ff), seed)
        p.create(f"enc.l{i}.ffn.b1", (d_ff,), seed, kind="zero")
        p.create(f"enc.l{i}.ffn.w2", (d_ff, d), seed)
        p.create(f"enc.l{i}.ffn.b2", (d,), seed, kind="zero")
    p.create("enc.op.w", (d, N_OPERATIONS), seed)
    p.create("enc.op.b", (N_OPERATIONS,), seed, kind="zero")

    for gate in ("z", "r", "c"):
        p.create(f"dec.gru.w_{gate}", (d, d), seed)
        p.create(f"dec.gru.u_{gate}", (d, d), seed)
        p.create(f"dec.gru.b_{gate}", (d,), seed, kind="zero")
    p.create("dec.copy_gate.w", (4 * d, 1), seed)
    p.create("dec.start_emb", (1, d), seed)

    if cfg.use_graph:
        p.create("gcn.domain_emb", (len(schema.domains), d), seed)
        p.create("gcn.slot_emb", (len(schema.slot_names()), d), seed)
        p.create("gcn.e_self", (1, d), seed)
        p.create("gcn.e_cooc", (1, d), seed)
        for g in range(cfg.n_graph_blocks):
            for layer in range(cfg.n_gcn_layers):
                for rel in ("w_self", "w_in", "w_out"):
                    p.create(f"gcn.g{g}.l{layer}.{rel}", (d, d), seed)
            p.create(f"gcn.g{g}.fuse.w", (d, 1), seed)
            p.create(f"gcn.g{g}.fuse.b", (1,), seed, kind="zero")
            p.create(f"gcn.g{g}.fuse.ln_gain", (d,), seed, kind="one")
            p.create(f"gcn.g{g}.fuse.ln_bias", (d,), seed, kind="zero")
    return p


def _graph_embeddings(params: ParamStore, schema: Schema) -> GraphEmbeddings:
    return GraphEmbeddings(
        domain_index={d: i for i, d in enumerate(schema.domains)},
        slot_index={s: i for i, s in enumerate(schema.slot_names())},
        domain_emb=params["gcn.domain_emb"],
        slot_edge_emb=params["gcn.slot_emb"],
        self_loop_emb=params["gcn.e_self"],
        cooccurrence_emb=params["gcn.e_cooc"],
    )


# ---------------------------------------------------------------------------
# Encoder
# ---------------------------------------------------------------------------

@dataclass
class EncoderOutput:
    h: Tensor                     # (n, d_h) final hidden states
    h_cls: Tensor                 # (1, d_h)
    h_slots: Tensor               # (J, d_h), one row per (domain, slot) pair
    graph: StateGraph | None      # None when the graph component is off
    node_matrix: Tensor | None    # G' of the last graph-enhanced block


def encode(encoded: EncodedInput, s_prev: DialogueState, params: ParamStore,
           config: ModelConfig, schema: Schema, vocab: Vocabulary,
           rng: np.random.Generator | None = None) -> EncoderOutput:
    """Run the transformer stack; ``rng`` enables dropout (training mode)."""
    n = len(encoded.tokens)
    if n > config.max_seq_len:
        raise ValueError(f"sequence length {n} exceeds max_seq_len={config.max_seq_len}")
    ids = np.array(vocab.encode(encoded.tokens))
    seg = np.array(encoded.segment_ids)
    p_drop = config.dropout if rng is not None else 0.0

    h = (params["enc.tok_emb"][ids]
         + params["enc.pos_emb"][np.array(encoded.position_ids)]
         + params["enc.seg_emb"][seg])
    h = dropout(h, p_drop, rng)

    graph: StateGraph | None = None
    node_matrix: Tensor | None = None
    graph_blocks = set(config.graph_block_indices())
    if graph_blocks:
        slot_map = dict(zip(encoded.pairs, encoded.slot_positions))
        graph = build_state_graph(s_prev, slot_map)
        emb = _graph_embeddings(params, schema)

    for i in range(config.n_layers):
        c = multi_head_attention(h, params[f"enc.l{i}.attn.w_q"],
                                 params[f"enc.l{i}.attn.w_k"],
                                 params[f"enc.l{i}.attn.w_v"], config.n_heads)
        if i in graph_blocks:
            g = i - (config.n_layers - config.n_graph_blocks)
            domain_reps: dict = {}
            feats = None
            for layer in range(config.n_gcn_layers):
                weights = {rel: params[f"gcn.g{g}.l{layer}.{rel}"]
                           for rel in ("w_self", "w_in", "w_out")}
                domain_reps, node_matrix = rgcn_update(
                    graph, c, emb, weights, domain_feats=feats,
                    update_placeholders=config.update_placeholders)
                feats = domain_reps or None
            fusion = {"w": params[f"gcn.g{g}.fuse.w"],
                      "b": params[f"gcn.g{g}.fuse.b"],
                      "ln_gain": params[f"gcn.g{g}.fuse.ln_gain"],
                      "ln_bias": params[f"gcn.g{g}.fuse.ln_bias"]}
            c = fuse(c, graph, domain_reps, fusion)
        c = dropout(c, p_drop, rng)
        a = layer_norm(h + c, params[f"enc.l{i}.ln1.gain"], params[f"enc.l{i}.ln1.bias"])
        f = affine(gelu(affine(a, params[f"enc.l{i}.ffn.w1"], params[f"enc.l{i}.ffn.b1"])),
                   params[f"enc.l{i}.ffn.w2"], params[f"enc.l{i}.ffn.b2"])
        f = dropout(f, p_drop, rng)
        h = layer_norm(a + f, params[f"enc.l{i}.ln2.gain"], params[f"enc.l{i}.ln2.bias"])

    slot_pos = np.array(encoded.slot_positions)
    return EncoderOutput(h=h, h_cls=h[0:1], h_slots=h[slot_pos],
                         graph=graph, node_matrix=node_matrix)


# ---------------------------------------------------------------------------
# Operation predictor
# ---------------------------------------------------------------------------

def operation_logits(h_slots: Tensor, params: ParamStore) -> Tensor:
    return affine(h_slots, params["enc.op.w"], params["enc.op.b"])


def predict_operations(h_slots: Tensor, params: ParamStore) -> Tensor:
    """(J, 4) distributions over state operations; rows sum to 1."""
    return softmax(operation_logits(h_slots, params))


# ---------------------------------------------------------------------------
# Value generator (copy-gated GRU)
# ---------------------------------------------------------------------------

def _decoder_step(s: Tensor, e_v: Tensor, enc_out: EncoderOutput,
                  input_ids: np.ndarray, g_rows: Tensor,
                  params: ParamStore, vocab_size: int) -> Tensor:
    """Mixed output distribution for one decode step over k rows.

    P = alpha * softmax(s W_e^T) + (1 - alpha) * scatter(softmax(s H^T));
    alpha = sigmoid(W_a [s; e_v; context; g]). Both components are proper
    distributions, so P rows sum to 1 by construction.
    """
    w_e = params["enc.tok_emb"]
    p_vocab = softmax(s @ w_e.transpose((1, 0)))               # (k, V)
    pos_scores = s @ enc_out.h.transpose((1, 0))               # (k, n)
    p_pos = softmax(pos_scores)
    p_copy = scatter_add_rows(p_pos, input_ids, vocab_size)    # (k, V)
    context = p_pos @ enc_out.h                                # (k, d)
    gate_in = concat([s, e_v, context, g_rows], axis=1)
    alpha = (gate_in @ params["dec.copy_gate.w"]).sigmoid()    # (k, 1)
    return alpha * p_vocab + (1.0 - alpha) * p_copy


def _gru_params(params: ParamStore) -> dict:
    return {f"{m}_{g}": params[f"dec.gru.{m}_{g}"]
            for g in ("z", "r", "c") for m in ("w", "u", "b")}


def _graph_summary(enc_out: EncoderOutput, query: Tensor) -> Tensor:
    if enc_out.node_matrix is None:
        return Tensor.zeros((1, query.shape[-1]))
    return graph_attention_gcls(query, enc_out.node_matrix)


def _tile(row: Tensor, k: int) -> Tensor:
    return Tensor(np.ones((k, 1))) @ row if k > 1 else row


def generation_loss(enc_out: EncoderOutput, input_ids: np.ndarray,
                    update_js: list[int], targets: list[list[int]],
                    params: ParamStore, config: ModelConfig,
                    ) -> tuple[Tensor, int]:
    """Teacher-forced negative log likelihood, summed over target tokens.

    ``targets[i]`` are the gold token ids (value tokens then [EOS]) for pair
    index ``update_js[i]``. Returns (summed NLL, token count).
    """
    if not update_js:
        return Tensor.zeros(()), 0
    k = len(update_js)
    gru = _gru_params(params)
    w_e = params["enc.tok_emb"]
    max_t = max(len(t) for t in targets)
    padded = np.zeros((k, max_t), dtype=np.intp)
    mask = np.zeros((k, max_t))
    for i, tgt in enumerate(targets):
        padded[i, :len(tgt)] = tgt
        mask[i, :len(tgt)] = 1.0

    js = np.array(update_js)
    x = enc_out.h_slots[js]                                    # (k, d)
    s = _tile(enc_out.h_cls, k)
    e_v = _tile(params["dec.start_emb"], k)
    if config.graph_query == "slot":
        g_rows = concat([_graph_summary(enc_out, enc_out.h_slots[j:j + 1])
                         for j in update_js], axis=0) if k > 1 else \
            _graph_summary(enc_out, enc_out.h_slots[update_js[0]:update_js[0] + 1])
    else:
        g_rows = _tile(_graph_summary(enc_out, enc_out.h_cls), k)

    step_nlls = []
    rows = np.arange(k)
    for t in range(max_t):
        s = gru_step(x, s, gru)
        p = _decoder_step(s, e_v, enc_out, input_ids, g_rows, params, config.vocab_size)
        picked = p[rows, padded[:, t]].reshape((k, 1))         # (k, 1)
        step_nlls.append(-((picked + LOG_EPS).log()))
        if t + 1 < max_t:
            x = w_e[padded[:, t]]
            e_v = x
    nll = concat(step_nlls, axis=1) * Tensor(mask)
    return nll.sum(), int(mask.sum())


def generate_value(j: int, enc_out: EncoderOutput, input_ids: np.ndarray,
                   params: ParamStore, config: ModelConfig,
                   vocab: Vocabulary) -> list[str]:
    """Greedy decode of pair j's value; structural specials are never emitted."""
    banned = [i for i in vocab.structural_ids()]
    gru = _gru_params(params)
    w_e = params["enc.tok_emb"]
    x = enc_out.h_slots[j:j + 1]
    s = enc_out.h_cls
    e_v = params["dec.start_emb"]
    query = enc_out.h_slots[j:j + 1] if config.graph_query == "slot" else enc_out.h_cls
    g_row = _graph_summary(enc_out, query)
    tokens: list[str] = []
    with no_grad():
        for _ in range(config.max_decode_len):
            s = gru_step(x, s, gru)
            p = _decoder_step(s, e_v, enc_out, input_ids, g_row, params,
                              config.vocab_size).data[0].copy()
            p[banned] = -1.0
            tok_id = int(np.argmax(p))
            if tok_id == vocab.eos_id:
                break
            tokens.append(vocab.id_to_token[tok_id])
            x = w_e[np.array([tok_id])]
            e_v = x
    return tokens


# ---------------------------------------------------------------------------
# Loss over a batch of turn samples
# ---------------------------------------------------------------------------

@dataclass
class TurnSample:
    """One (dialogue, turn) training example with teacher-forcing targets."""

    encoded: EncodedInput
    prev_state: DialogueState
    gold_ops: np.ndarray                      # (J,) StateOperation values
    update_targets: dict[int, list[int]]      # pair index -> token ids + EOS
    input_ids: np.ndarray = field(default=None)


def make_sample(prev_state: DialogueState, prev_tokens: list[str],
                curr_tokens: list[str], gold_state: DialogueState,
                schema: Schema, vocab: Vocabulary, max_len: int,
                packed: bool = False) -> TurnSample:
    ser = serialize_input_packed if packed else serialize_input
    encoded = ser(prev_state, prev_tokens, curr_tokens, schema, max_len)
    ops = derive_operations(prev_state, gold_state)
    gold_ops = np.array([int(ops[pair][0]) for pair in encoded.pairs])
    update_targets = {}
    for j, pair in enumerate(encoded.pairs):
        op, value = ops[pair]
        if op == StateOperation.UPDATE:
            update_targets[j] = vocab.encode(tokenize(value)) + [vocab.eos_id]
    return TurnSample(encoded, prev_state, gold_ops, update_targets,
                      np.array(vocab.encode(encoded.tokens)))


def compute_loss(batch: list[TurnSample], params: ParamStore,
                 config: ModelConfig, schema: Schema, vocab: Vocabulary,
                 rng: np.random.Generator | None = None,
                 ) -> tuple[Tensor, dict]:
    """Mean operation cross-entropy plus mean UPDATE-token cross-entropy."""
    if not batch:
        raise ValueError("empty batch")
    op_nll_sum = Tensor.zeros(())
    gen_nll_sum = Tensor.zeros(())
    n_cells = 0
    n_tokens = 0
    for sample in batch:
        enc_out = encode(sample.encoded, sample.prev_state, params, config,
                         schema, vocab, rng=rng)
        logp = log_softmax(operation_logits(enc_out.h_slots, params))
        j = sample.gold_ops.shape[0]
        picked = logp[np.arange(j), sample.gold_ops]
        op_nll_sum = op_nll_sum + (-picked.sum())
        n_cells += j
        js = sorted(sample.update_targets)
        nll, count = generation_loss(enc_out, sample.input_ids, js,
                                     [sample.update_targets[i] for i in js],
                                     params, config)
        gen_nll_sum = gen_nll_sum + nll
        n_tokens += count
    op_loss = op_nll_sum / float(n_cells)
    gen_loss = gen_nll_sum / float(n_tokens) if n_tokens else Tensor.zeros(())
    loss = op_loss + gen_loss
    return loss, {"op_loss": float(op_loss.data),
                  "gen_loss": float(gen_loss.data),
                  "n_update_tokens": n_tokens}


# ---------------------------------------------------------------------------
# Dialogue-level inference
# ---------------------------------------------------------------------------

def turn_tokens(turn: DialogueTurn) -> list[str]:
    return turn.system_utterance + turn.user_utterance


def predict_dialogue(dialogue: Dialogue, params: ParamStore, config: ModelConfig,
                     schema: Schema, vocab: Vocabulary,
                     use_predicted_prev: bool = True,
                     oracle=None) -> list[tuple[dict, DialogueState]]:
    """Per turn: (operations map, resulting state), from the all-NULL start.

    With ``use_predicted_prev`` the model consumes its own previous output;
    otherwise it consumes the gold previous state (turn-level teacher
    forcing). ``oracle`` (tests only) replaces the network with a callable
    (prev_state, turn) -> operations map.
    """
    pairs = schema.pairs()
    prev_pred = DialogueState.empty(pairs)
    prev_gold = DialogueState.empty(pairs)
    prev_tokens: list[str] = []
    out: list[tuple[dict, DialogueState]] = []
    for turn in dialogue.turns:
        prev_state = prev_pred if use_predicted_prev else prev_gold
        if oracle is not None:
            ops = oracle(prev_state, turn)
        else:
            ops = _predict_turn(prev_state, prev_tokens, turn, params, config,
                                schema, vocab)
        new_state = apply_operations(prev_state, ops)
        out.append((ops, new_state))
        prev_pred = new_state
        prev_gold = turn.gold_state
        prev_tokens = turn_tokens(turn)
    return out


def track_dialogue(dialogue: Dialogue, params: ParamStore, config: ModelConfig,
                   schema: Schema, vocab: Vocabulary,
                   use_predicted_prev: bool = True,
                   oracle=None) -> list[DialogueState]:
    """Predicted state after every turn (see :func:`predict_dialogue`)."""
    return [state for _, state in
            predict_dialogue(dialogue, params, config, schema, vocab,
                             use_predicted_prev=use_predicted_prev, oracle=oracle)]


def _predict_turn(prev_state: DialogueState, prev_tokens: list[str],
                  turn: DialogueTurn, params: ParamStore, config: ModelConfig,
                  schema: Schema, vocab: Vocabulary) -> dict:
    ser = serialize_input_packed if config.packed_positions else serialize_input
    encoded = ser(prev_state, prev_tokens, turn_tokens(turn),
                  schema, config.max_seq_len)
    input_ids = np.array(vocab.encode(encoded.tokens))
    with no_grad():
        enc_out = encode(encoded, prev_state, params, config, schema, vocab)
        op_probs = predict_operations(enc_out.h_slots, params).data
        ops: dict = {}
        for j, pair in enumerate(encoded.pairs):
            op = StateOperation(int(np.argmax(op_probs[j])))
            if op == StateOperation.UPDATE:
                tokens = generate_value(j, enc_out, input_ids, params, config, vocab)
                if tokens:
                    ops[pair] = (op, " ".join(tokens))
                else:
                    # degenerate empty generation: treat as a delete
                    ops[pair] = (StateOperation.DELETE, None)
            else:
                ops[pair] = (op, None)
    return ops
