import json

import numpy as np
import pytest

from newton_incl.catalog import (
    UnknownProblemError,
    catalog,
    catalog_entries,
    get_problem,
    load_catalog,
    resolve_problem,
)
from newton_incl.cone import ProductCone
from newton_incl.expr import Var
from newton_incl.problems import (
    InclusionProblem,
    ProblemFormatError,
    directional_taylor,
    eval_F,
    eval_jacobian,
    load_problem,
    problem_to_dict,
    save_problem,
    scale_problem,
)


def cube_problem():
    return InclusionProblem(n=1, cone=ProductCone(0, 1), F=(Var(0) ** 3,), x_tilde=[1.0], R=0.5)


def test_builtin_catalog():
    names = [e.name for e in catalog_entries()]
    assert len(names) >= 6
    for name in ("sqrt2", "cubic", "ineq-line", "ineq-circle", "system-2x2", "mixed-3"):
        assert name in names
    assert all(e.description for e in catalog_entries())


def test_unknown_problem():
    with pytest.raises(UnknownProblemError):
        get_problem("nope")
    with pytest.raises(UnknownProblemError):
        resolve_problem("no/such/file.json")


def test_resolve_from_file(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(save_problem(get_problem("cubic")))
    assert resolve_problem(str(path)).F == get_problem("cubic").F


def test_expected_solutions_solve_the_catalog():
    for p in catalog():
        sol = p.expected.get("solution")
        if sol is None:
            continue
        F = eval_F(p, sol)
        assert np.all(F[: p.cone.p] <= 1e-12)
        assert np.all(np.abs(F[p.cone.p :]) <= 1e-12)


def test_eval_examples():
    p = get_problem("sqrt2")
    assert eval_F(p, [1.5]) == pytest.approx([0.25])
    np.testing.assert_allclose(eval_jacobian(p, [1.5]), [[3.0]])
    s = get_problem("system-2x2")
    np.testing.assert_allclose(eval_jacobian(s, [2.0, 0.5]), [[4.0, 1.0], [0.5, 2.0]])


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    for p in catalog():
        for _ in range(1000):
            x = p.x_tilde + rng.uniform(-p.R, p.R, size=p.n) / np.sqrt(p.n)
            J = eval_jacobian(p, x)
            for j in range(p.n):
                e = np.zeros(p.n)
                e[j] = h
                fd = (eval_F(p, x + e) - eval_F(p, x - e)) / (2 * h)
                assert np.all(np.abs(fd - J[:, j]) <= 1e-6 * np.maximum(1.0, np.abs(J[:, j])))


def test_directional_taylor():
    c = directional_taylor(get_problem("sqrt2"), [1.5], [1.0], 2)
    assert [float(v[0]) for v in c] == pytest.approx([0.25, 3.0, 1.0])
    c = directional_taylor(cube_problem(), [1.0], [1.0], 3)
    assert [float(v[0]) for v in c] == pytest.approx([1.0, 3.0, 3.0, 1.0])
    # orders past the degree are zero
    c = directional_taylor(get_problem("sqrt2"), [1.5], [2.0], 4)
    assert [float(v[0]) for v in c] == pytest.approx([0.25, 6.0, 4.0, 0.0, 0.0])


def test_taylor_low_orders_match_F_and_J():
    rng = np.random.default_rng(9)
    for p in catalog():
        x = p.x_tilde + 0.1 * rng.normal(size=p.n)
        v = rng.normal(size=p.n)
        c = directional_taylor(p, x, v, p.total_degree)
        assert c[0] == pytest.approx(eval_F(p, x))
        assert c[1] == pytest.approx(eval_jacobian(p, x) @ v)
        # sum of coefficients is F(x + v)
        assert np.sum(c, axis=0) == pytest.approx(eval_F(p, x + v))


def test_scale_problem():
    p = get_problem("ineq-circle")
    s = scale_problem(p, [2.0, 0.5])
    x = np.array([0.3, -0.2])
    assert eval_F(s, x) == pytest.approx(np.array([2.0, 0.5]) * eval_F(p, x))
    with pytest.raises(ValueError):
        scale_problem(p, [1.0, -1.0])


def test_save_load_round_trip():
    for p in catalog():
        text = save_problem(p)
        back = load_problem(text)
        assert back.F == p.F
        assert back.n == p.n and back.cone == p.cone and back.R == p.R
        assert np.array_equal(back.x_tilde, p.x_tilde)
        assert back.expected == p.expected
        assert save_problem(back) == text


def test_save_writes_17_significant_digits():
    text = save_problem(get_problem("sqrt2"))
    assert "0.083333333333333329" in text
    assert "1.5," in text or "1.5\n" in text
    assert "\"R\": 0.5" in text
    assert "-2.0" in text
    assert json.loads(text)["expected"]["b"] == 1.0 / 12.0


def test_load_catalog_yaml(tmp_path):
    path = tmp_path / "mine.yml"
    path.write_text(
        "problems:\n"
        "  - name: line\n"
        "    description: x - 1 = 0\n"
        "    n: 1\n"
        "    cone: {p: 0, q: 1}\n"
        "    F: [[add, [var, 0], [const, -1.0]]]\n"
        "    x_tilde: [0.0]\n"
        "    R: 2.0\n"
    )
    (entry,) = load_catalog(path)
    assert entry.name == "line" and entry.description == "x - 1 = 0"


def _doc(**overrides):
    doc = problem_to_dict(get_problem("sqrt2"))
    doc.update(overrides)
    return json.dumps(doc)


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("{not json", "Invalid JSON"),
        ("[1, 2]", "JSON object"),
        (_doc(F=[["add", ["var", 0], ["const", 1.0]], ["var", 0]]), "F"),
        (_doc(F=[["pow", ["var", 0], -2]]), "F[0][2]"),
        (_doc(F=[["var", 3]]), "F[0]"),
        (_doc(x_tilde=[1.0, 2.0]), "x_tilde"),
        (_doc(R=0.0), "R"),
        (_doc(cone={"p": 0, "q": 0}), "cone"),
        (_doc(extra=1), "extra"),
    ],
)
def test_load_rejects_bad_documents(text, fragment):
    with pytest.raises(ProblemFormatError) as exc:
        load_problem(text)
    assert fragment in str(exc.value)
