import math

import numpy as np
import pytest

from ppsolve.examples import REGISTRY
from ppsolve.exceptions import DataError, ParseError
from ppsolve.problem import load_csv, parse_problem, pretty_print, read_problem, write_csv

VOLTERRA2 = """
[equation]
domain = [0.0, 5.0]

[[equation.derivative]]
order = 0

[[equation.integral]]
type = "volterra"
kernel = "sin(x - t)"
lower = 0.0

[data]
file = "data.csv"
"""


class TestParse:
    def test_minimal_example_file_fills_defaults(self):
        p = parse_problem('[data]\nexample = "volterra2_eq35"\n')
        entry = REGISTRY["volterra2_eq35"]
        assert p.equation == entry.equation
        assert (entry.m, entry.interval, entry.sigma) == (100, (0.0, 5.0), 0.01)
        assert p.data.m is None and p.data.seed == 0

    def test_unknown_key_is_named(self):
        text = '[data]\nexample = "volterra2_eq35"\n\n[search]\nmax_pieces = 3\nsolverr = 1\n'
        with pytest.raises(ParseError) as info:
            parse_problem(text)
        assert "solverr" in str(info.value)
        assert info.value.line == 6
        assert info.value.key == "search.solverr"

    def test_convolution_kernel_tag(self):
        p = parse_problem(VOLTERRA2)
        (term,) = p.equation.integrals
        assert term.kind == "convolution-trig"
        assert term.build().kernel.kind == "convolution-trig"
        again = parse_problem(pretty_print(p))
        assert again == p

    def test_malformed_toml(self):
        with pytest.raises(ParseError) as info:
            parse_problem('[data]\nexample = "x\n')
        assert info.value.line == 2

    def test_bad_expression(self):
        with pytest.raises(ParseError):
            parse_problem(VOLTERRA2.replace("sin(x - t)", "sin(x - z)"))

    def test_needs_data(self):
        with pytest.raises(ParseError, match=r"\[data\]"):
            parse_problem("[equation]\ndomain = [0, 1]\n")

    def test_type_mismatch(self):
        with pytest.raises(ParseError, match="max_pieces"):
            parse_problem(VOLTERRA2 + '\n[search]\nmax_pieces = "four"\n')

    def test_lambda_key_renamed(self):
        p = parse_problem(VOLTERRA2 + "\n[regularization]\nenabled = true\nlambda = 0.001\n")
        assert p.regularization.lam == 0.001 and p.regularization.enabled

    def test_unknown_example(self):
        with pytest.raises(ParseError, match="unknown example"):
            parse_problem('[data]\nexample = "nope"\n')

    def test_infinite_upper_limit(self):
        text = VOLTERRA2.replace('type = "volterra"', 'type = "fredholm"').replace(
            "lower = 0.0", "lower = 0.0\nupper = inf").replace("sin(x - t)", "exp(-x*t)")
        (term,) = parse_problem(text).equation.integrals
        assert term.upper == math.inf and term.kind == "laplace"

    def test_read_problem_missing(self, tmp_path):
        with pytest.raises(DataError):
            read_problem(tmp_path / "absent.toml")


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_registry_round_trip(name):
    p = REGISTRY[name].problem(seed=3)
    assert parse_problem(pretty_print(p)) == p


class TestCSV:
    def write(self, tmp_path, text, name="d.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    def test_header_and_commas(self, tmp_path):
        s = load_csv(self.write(tmp_path, "x,phi\n0,1\n1,2\n2,3\n3,4\n"))
        np.testing.assert_array_equal(s.abscissae, [0, 1, 2, 3])
        np.testing.assert_array_equal(s.values, [1, 2, 3, 4])

    def test_whitespace_unsorted(self, tmp_path):
        s = load_csv(self.write(tmp_path, "3 4\n# comment\n0 1\n2\t3\n1 2\n"))
        np.testing.assert_array_equal(s.abscissae, [0, 1, 2, 3])
        np.testing.assert_array_equal(s.values, [1, 2, 3, 4])

    def test_duplicate(self, tmp_path):
        with pytest.raises(DataError, match="duplicate"):
            load_csv(self.write(tmp_path, "0,1\n1,2\n1,3\n2,3\n3,4\n"))

    def test_too_few_rows(self, tmp_path):
        with pytest.raises(DataError, match="at least 4"):
            load_csv(self.write(tmp_path, "0,1\n1,2\n2,3\n"))

    def test_non_numeric(self, tmp_path):
        with pytest.raises(DataError, match="row 3"):
            load_csv(self.write(tmp_path, "0,1\n1,2\n2,abc\n3,4\n4,5\n"))

    def test_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nothing.csv")

    def test_write_round_trip(self, tmp_path):
        path = tmp_path / "out.csv"
        x = np.array([0.1, 1 / 3, 2.0, 7.5])
        y = np.array([np.pi, -1e-300, 12345.678901234567, 0.0])
        write_csv(path, ["x", "y"], [x, y])
        raw = path.read_bytes()
        assert raw.startswith(b"x,y\r\n") and raw.count(b"\r\n") == 5
        assert b"0.33333333333333331" in raw
        back = load_csv(path)
        np.testing.assert_array_equal(back.abscissae, x)
        np.testing.assert_array_equal(back.values, y)
        assert not [p for p in tmp_path.iterdir() if p.name.startswith(".tmp-")]
