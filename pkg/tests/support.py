"""Shared drivers for the heavier checks (used by unit and acceptance tests)."""
import numpy as np

from aspectforge import autograd as ag
from aspectforge.corpus import flatten_examples
from aspectforge.model import Batch, Model, init_params, toy_config
from aspectforge.pipeline import encode_rows, make_rows
from aspectforge.synthetic import overfit_reviews, synonym_shift_corpus
from aspectforge.tokenizer import SPECIAL_TOKENS, Vocabulary, pre_tokenize
from aspectforge.train import TrainConfig, evaluate, train_loop
from oracles import central_difference, relative_error


def toy_gradient_check(n_coords=200, seed=3, h=1e-5):
    """Max relative error of analytic vs central-difference gradients on the toy model.

    Parameters are redrawn from N(0, 0.3) (scales around 1) so the check runs
    at a point where every gradient is well above roundoff; at initialization
    most entries are ~1e-8. Dropout is off so the loss is deterministic.
    Returns (max_error, per-group max error).
    """
    cfg = toy_config(60, 16, dropout=0.0)
    params = init_params(cfg, 1)
    rng = np.random.default_rng(seed)
    for name, t in params.items():
        t.data[...] = rng.normal(0, 0.3, t.shape) + (1.0 if name.endswith("scale") else 0.0)
    ids = rng.integers(5, 60, (4, 16))
    mask = np.ones((4, 16), dtype=np.int64)
    mask[1, 10:] = 0
    mask[2, 6:] = 0
    ids[mask == 0] = 0
    seg = np.zeros_like(ids)
    seg[:, 4:] = 1
    seg[mask == 0] = 0
    batch = Batch(ids, seg, mask)
    labels = np.array([0, 3, 6, 2])
    model = Model(cfg, params)

    def loss():
        return ag.cross_entropy(model.forward(batch).logits, labels)

    ag.backward(loss())

    def f():
        with ag.no_grad():
            return loss().item()

    names = list(params)
    # every group at least once, the rest spread at random
    picks = names + [names[i] for i in rng.integers(0, len(names), n_coords - len(names))]
    per_group: dict[str, float] = {}
    for name in picks:
        t = params[name]
        idx = tuple(int(rng.integers(0, s)) for s in t.shape)
        numeric = central_difference(f, t.data, idx, h)
        err = relative_error(float(t.grad[idx]), numeric)
        per_group[name] = max(per_group.get(name, 0.0), err)
    return max(per_group.values()), per_group


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []

AB_MAX_LEN = 40
AB_TRAIN = dict(learning_rate=1e-3, epochs=30, batch_size=32)
AB_DROPOUT = 0.1


def enrichment_arm(seed, enrich):
    """Final-epoch test accuracy of one arm on the synonym-shift corpus.

    Both arms share data, vocabulary, initialization and training budget;
    only the auxiliary sentence differs. The vocabulary holds whole words so
    the comparison is about the lexicon, not subword overlap.
    """
    corpus = synonym_shift_corpus(seed)
    vocab = Vocabulary(list(SPECIAL_TOKENS) + list(corpus.words))
    train_rows = make_rows(flatten_examples(corpus.train), corpus.lexicon, enrich)
    test_rows = make_rows(flatten_examples(corpus.test), corpus.lexicon, enrich)
    train = encode_rows(train_rows, vocab, AB_MAX_LEN)
    test = encode_rows(test_rows, vocab, AB_MAX_LEN)
    model = Model(toy_config(len(vocab), AB_MAX_LEN, dropout=AB_DROPOUT), seed=seed)
    # the returned best-epoch parameters are ignored; ``model`` holds the final ones
    train_loop(train, test, model, TrainConfig(seed=seed, **AB_TRAIN))
    return evaluate(model, test)[1]


OVERFIT_MAX_LEN = 32


def overfit_run(epochs=300, seed=0):
    """Train the toy model with default AdamW settings on the 64-example fixture.

    Stops as soon as training accuracy reaches 100%.
    """
    reviews = overfit_reviews()
    words = sorted({w for r in reviews for t in (r.text, *(a.term for a in r.aspects)) for w in pre_tokenize(t)})
    vocab = Vocabulary(list(SPECIAL_TOKENS) + words)
    data = encode_rows(make_rows(flatten_examples(reviews), None, False), vocab, OVERFIT_MAX_LEN)
    model = Model(toy_config(len(vocab), OVERFIT_MAX_LEN), seed=seed)
    cfg = TrainConfig(epochs=epochs, batch_size=32, seed=seed, target_train_accuracy=1.0)
    _, history = train_loop(data, None, model, cfg)
    return len(data), history


def smoothed(values, window=10):
    """Trailing moving average over ``window`` epochs."""
    v = np.asarray(values, dtype=np.float64)
    return np.convolve(v, np.ones(window) / window, mode="valid")
