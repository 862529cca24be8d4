#!/usr/bin/env python3
"""
Tests for the parameter-field expression parser and evaluator
"""

import math
import random

import numpy as np
import pytest

from errors import DomainError, ExpressionError, UnboundVariableError
from expr_parser import evaluate, evaluate_array, free_variables, parse, to_source

PARABOLA = "-4*6*(x-0.5)^2 + 6 + 1"


def test_parse_examples():
    """Free variables of the expressions used in the sample specs"""
    test_cases = [
        ("6.9*z + 0.1", {"z"}),
        ("0", set()),
        ("3*sin(6*pi*x) + 4", {"x"}),
        ("pi", set()),
        ("min(x, y*z)", {"x", "y", "z"}),
        ("max(rho, 0.2) + phi*e", {"rho", "phi"}),
    ]
    for source, expected in test_cases:
        ast = parse(source)
        assert free_variables(ast) == frozenset(expected), source
        assert ast.free_variables() == frozenset(expected)


def test_evaluate_examples():
    test_cases = [
        ("6.9*z + 0.1", {"z": 1.0}, 7.0),
        (PARABOLA, {"x": 0.0}, 1.0),
        (PARABOLA, {"x": 0.5}, 7.0),
        ("3*sin(6*pi*x) + 4", {"x": 0.25}, 1.0),
        ("0", {}, 0.0),
        ("0", {"x": 3.0, "y": -2.0}, 0.0),
    ]
    for source, bindings, expected in test_cases:
        assert evaluate(parse(source), bindings) == pytest.approx(expected, abs=1e-12), source


def test_constant_tree():
    ast = parse("2*pi")
    assert ast.is_constant()
    assert not parse("2*x").is_constant()


def test_precedence_and_associativity():
    test_cases = [
        ("-2^2", -4.0),
        ("2^-1", 0.5),
        ("2^3^2", 512.0),
        ("8/4/2", 1.0),
        ("10-4-3", 3.0),
        ("2+3*4", 14.0),
        ("(2+3)*4", 20.0),
        ("--3", 3.0),
        ("-(2)^2", -4.0),
    ]
    for source, expected in test_cases:
        assert evaluate(parse(source), {}) == expected, source


def test_precedence_property_random():
    rng = random.Random(7)
    ast = parse("a+b*c")
    for _ in range(100):
        a, b, c = (rng.uniform(-100, 100) for _ in range(3))
        assert evaluate(ast, {"a": a, "b": b, "c": c}) == a + (b * c)


def test_functions():
    test_cases = [
        ("sqrt(16)", 4.0),
        ("abs(-3.5)", 3.5),
        ("ln(e)", 1.0),
        ("exp(0)", 1.0),
        ("cos(pi)", -1.0),
        ("tan(0)", 0.0),
        ("min(3, 1, 2)", 1.0),
        ("max(3, 1, 2)", 3.0),
    ]
    for source, expected in test_cases:
        assert evaluate(parse(source), {}) == pytest.approx(expected), source


def test_syntax_errors_carry_byte_offsets():
    test_cases = [
        ("2*(x +", 6),
        ("2 $ 3", 2),
        ("(1 + 2", 6),
        ("1 + * 2", 4),
        ("sin 2", 0),
        ("3 4", 2),
        ("", 0),
        ("1 +\u00a0)", 5),
    ]
    for source, offset in test_cases:
        with pytest.raises(ExpressionError) as exc_info:
            parse(source)
        assert exc_info.value.offset == offset, source
        assert exc_info.value.exit_code == 4


def test_unknown_names():
    with pytest.raises(ExpressionError, match="unknown function 'foo'"):
        parse("foo(1)")
    with pytest.raises(ExpressionError, match="argument"):
        parse("sin(1, 2)")
    with pytest.raises(ExpressionError, match="argument"):
        parse("min(1)")


def test_unbound_variable():
    with pytest.raises(UnboundVariableError) as exc_info:
        evaluate(parse("x"), {})
    assert exc_info.value.name == "x"
    assert "'x'" in str(exc_info.value)

    with pytest.raises(UnboundVariableError):
        evaluate_array(parse("y + 1"), {"x": np.zeros(3)})


def test_domain_errors_are_reported():
    test_cases = [
        ("sqrt(0 - 1)", {}),
        ("ln(0)", {}),
        ("ln(x)", {"x": -2.0}),
        ("1/x", {"x": 0.0}),
        ("(0 - 8)^(1/3)", {}),
        ("0^-1", {}),
        ("exp(1000)", {}),
    ]
    for source, bindings in test_cases:
        with pytest.raises(DomainError):
            evaluate(parse(source), bindings)


def test_array_domain_errors():
    with pytest.raises(DomainError):
        evaluate_array(parse("sqrt(x)"), {"x": np.array([1.0, 0.0, -1.0])})
    with pytest.raises(DomainError):
        evaluate_array(parse("1/x"), {"x": np.array([1.0, 0.0])})


def test_array_matches_scalar():
    rng = np.random.default_rng(3)
    xs = rng.uniform(0.0, 1.0, 50)
    for source in [PARABOLA, "3*sin(6*pi*x) + 4", "min(x, 0.3) + max(x^2, 0.1)", "abs(x - 0.5)*2"]:
        ast = parse(source)
        values = evaluate_array(ast, {"x": xs})
        expected = np.array([evaluate(ast, {"x": float(x)}) for x in xs])
        np.testing.assert_allclose(values, expected, rtol=0, atol=1e-12)


def test_round_trip_preserves_evaluation():
    rng = random.Random(11)
    sources = [
        PARABOLA,
        "3*sin(6*pi*x) + 4",
        "6.9*z + 0.1",
        "-x^2 + 2^-y / (1 + abs(z))",
        "min(x, y*z, 0.5) - max(x, 1e-3)",
        "exp(-x) * cos(2*pi*y) + sqrt(z + 1)",
        "0.1",
    ]
    for source in sources:
        ast = parse(source)
        reparsed = parse(to_source(ast))
        assert reparsed.root == ast.root, source
        for _ in range(100):
            bindings = {name: rng.uniform(0.0, 1.0) for name in "xyz"}
            assert evaluate(reparsed, bindings) == evaluate(ast, bindings)


def test_parabola_symmetry():
    rng = random.Random(5)
    ast = parse(PARABOLA)
    for _ in range(100):
        x = rng.uniform(0.0, 1.0)
        assert abs(evaluate(ast, {"x": x}) - evaluate(ast, {"x": 1.0 - x})) < 1e-12


def test_scientific_notation():
    assert evaluate(parse("1.5e-3*1e3"), {}) == pytest.approx(1.5)
    assert evaluate(parse(".5 + 2."), {}) == 2.5
    assert math.isclose(evaluate(parse("2E2"), {}), 200.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
