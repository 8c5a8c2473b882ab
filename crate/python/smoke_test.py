"""Smoke test for the spanparse_py extension module.

Builds the extension and the CLI in release mode if needed, then exercises
trees, charts, evaluation, sampling and a small trained parser.

    python3 python/smoke_test.py
"""

import importlib.util
import random
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
TARGET = ROOT / "target" / "release"
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "spanparse-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    subprocess.run(["cargo", "build", "--release", "-p", "spanparse", "--bin", "spanparse"], cwd=ROOT, check=True)


def load_module(tmp):
    lib = TARGET / "libspanparse_py.so"
    dest = Path(tmp) / "spanparse_py.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("spanparse_py", dest)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def check_trees(sp):
    text = "(S (NP (DT the) (NN cat)) (VP (VBD sat)))"
    t = sp.Tree.parse(text)
    assert str(t) == text
    assert t.words() == ["the", "cat", "sat"]
    assert t.tags() == ["DT", "NN", "VBD"]
    assert len(t) == 3
    assert sorted(t.spans()) == [(0, 2, "NP"), (0, 3, "S"), (2, 3, "VP")]
    u = sp.Tree.parse("(S (VP (VB go)))")
    assert u.collapse().spans() == [(0, 1, "S::VP")]
    assert u.collapse().expand() == u
    assert len(sp.parse_trees((FIXTURES / "roundtrip.mrg").read_text())) == 15
    try:
        sp.Tree.parse("(S (NP (NN a))")
    except ValueError:
        pass
    else:
        raise AssertionError("unbalanced input accepted")


def check_charts(sp):
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 6)
        labels = rng.randint(2, 4)
        cells = len(sp.span_list(n)) * labels
        chart = sp.Chart(n, labels, [rng.uniform(-1, 1) for _ in range(cells)])
        score, spans = chart.decode()
        assert score == chart.brute_force()[0]
        assert spans[0][:2] == (0, n)
        total = sum(chart.get(i, j, l) for i, j, l in spans)
        assert abs(total - score) < 1e-12
    a = sp.Chart(2, 3, [0.0, 1.0, 2.0] * 3)
    b = sp.Chart(2, 3, [0.0, 3.0, -2.0] * 3)
    mean = sp.ensemble([a, b])
    assert mean.get(0, 2, 1) == 2.0 and mean.get(0, 2, 2) == 0.0
    assert sp.ensemble([a, a, a, a]).decode() == a.decode()


def check_evaluation(sp):
    gold = (FIXTURES / "eval_gold.mrg").read_text()
    pred = (FIXTURES / "eval_pred.mrg").read_text()
    r = sp.evaluate(gold, pred)
    assert (r.precision, r.recall, r.f1) == (50.0, 50.0, 50.0)
    assert sp.evaluate(gold, gold).f1 == 100.0
    delta, p = sp.bootstrap(gold, pred, pred, resamples=500, seed=1)
    assert delta == 0.0 and p == 1.0
    assert f"{sp.relative_error_delta(91.40, 91.12):+.2f}" == "+3.26"


def check_sampling(sp):
    p = sp.sampling_probabilities([0.8, 0.2], 0.7)
    w = [0.8 ** 0.7, 0.2 ** 0.7]
    assert all(abs(a - b / sum(w)) < 1e-12 for a, b in zip(p, w))
    assert sp.sampling_probabilities([0.8, 0.2], 1.0) == [0.8, 0.2]
    assert sp.sampling_probabilities([0.7, 0.2, 0.1], 0.0) == [1 / 3] * 3
    assert sp.toy_subword_tokenize("wordpieces") == ["word", "##piec", "##es"]


def check_parser(sp, tmp):
    train = Path(tmp) / "train.mrg"
    train.write_text((FIXTURES / "roundtrip.mrg").read_text())
    model = Path(tmp) / "m.spck"
    subprocess.run(
        [
            str(TARGET / "spanparse"),
            "train",
            "--config",
            str(FIXTURES / "example.conf"),
            "--lang",
            "en",
            "--train",
            str(train),
            "--output",
            str(model),
        ],
        check=True,
        capture_output=True,
    )
    parser = sp.Parser.load(str(model))
    assert parser.languages() == ["en"]
    assert parser.num_parameters > 0
    words = "the cat sat on the mat".split()
    tree = parser.parse(words)
    assert tree.words() == words
    assert set(tree.tags()) == {"XX"}
    chart = parser.chart(words)
    assert chart.n == len(words)
    assert sp.ensemble([chart] * 4).decode() == chart.decode()


def main():
    if "--no-build" not in sys.argv:
        build()
    with tempfile.TemporaryDirectory() as tmp:
        sp = load_module(tmp)
        for name, fn in [
            ("trees", lambda: check_trees(sp)),
            ("charts", lambda: check_charts(sp)),
            ("evaluation", lambda: check_evaluation(sp)),
            ("sampling", lambda: check_sampling(sp)),
            ("parser", lambda: check_parser(sp, tmp)),
        ]:
            fn()
            print(f"ok {name}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
