import pytest

from newton_incl.expr import (
    MAX_DEPTH,
    Const,
    ExprFormatError,
    Var,
    degree,
    differentiate,
    evaluate,
    from_json,
    to_json,
)


def test_evaluate_and_differentiate():
    x, y = Var(0), Var(1)
    f = x**2 * y - 3 * y + 1
    assert evaluate(f, [2.0, 5.0]) == pytest.approx(6.0)
    assert evaluate(differentiate(f, 0), [2.0, 5.0]) == pytest.approx(20.0)
    assert evaluate(differentiate(f, 1), [2.0, 5.0]) == pytest.approx(1.0)
    assert degree(f) == 3


def test_constant_folding():
    assert differentiate(Const(4.0), 0) == Const(0.0)
    assert differentiate(Var(1), 0) == Const(0.0)
    assert differentiate(Var(0), 0) == Const(1.0)


def test_pow_zero_is_one():
    assert evaluate(Var(0) ** 0, [7.0]) == 1.0
    assert degree(Var(0) ** 0) == 0


def test_json_encoding():
    doc = ["add", ["pow", ["var", 0], 2], ["const", -2.0]]
    e = from_json(doc)
    assert to_json(e) == doc
    assert evaluate(e, [1.5]) == pytest.approx(0.25)
    # n-ary add folds left
    assert evaluate(from_json(["add", ["var", 0], ["var", 0], ["const", 1]]), [2.0]) == 5.0


@pytest.mark.parametrize(
    "doc, where",
    [
        (["pow", ["var", 0], -1], "$[2]"),
        (["pow", ["var", 0], 1.5], "$[2]"),
        (["var", -1], "$[1]"),
        (["const", "x"], "$[1]"),
        (["sin", ["var", 0]], "$"),
        (["add", ["var", 0]], "$"),
        (["mul", ["var", 0], ["foo"]], "$[2]"),
        ({"op": "add"}, "$"),
    ],
)
def test_bad_json_names_location(doc, where):
    with pytest.raises(ExprFormatError) as exc:
        from_json(doc)
    assert str(exc.value).startswith(where)


def test_depth_limit():
    doc = ["var", 0]
    for _ in range(MAX_DEPTH):
        doc = ["neg", doc]
    with pytest.raises(ExprFormatError):
        from_json(doc)
