import unittest
from unittest.mock import patch
import json

import numpy as np

from src.circuit import CircuitReport
from src.formatter import format_complex, render, render_table
from src.pointer import MeasurementRecord
from src.scenarios import SCENARIO_NAMES, original_cheshire
from src.weakvalue import WeakValueTable


def make_record(g=0.1, weak_value=1 + 0.5j):
    positions = np.linspace(-10.0, 10.0, 8, endpoint=False)
    return MeasurementRecord(
        g=g,
        sigma=1.0,
        success_probability=0.25,
        conditional_position_mean=g * weak_value.real,
        conditional_momentum_mean=weak_value.imag * g / 2,
        pointer_wavefunction=np.ones(8, dtype=complex),
        positions=positions,
        inferred_weak_value=weak_value,
    )


class TestFormatComplex(unittest.TestCase):

    def test_basic_values(self):
        self.assertEqual(format_complex(1), "1+0i")
        self.assertEqual(format_complex(0.5 - 0.25j), "0.5-0.25i")
        self.assertEqual(format_complex(4j / 3), "0+1.33333i")
        self.assertEqual(format_complex(-2 + 1e6j), "-2+1e+06i")

    def test_tiny_components_are_zero(self):
        """1e-12 未満の成分が 0 と表示され、-0 が出ないことをテスト"""
        self.assertEqual(format_complex(-1e-13), "0+0i")
        self.assertEqual(format_complex(complex(-0.0, -0.0)), "0+0i")
        self.assertEqual(format_complex(1 - 1e-13j), "1+0i")


class TestRenderTable(unittest.TestCase):

    def test_cheshire_table(self):
        """経路 1 に粒子、経路 2 に偏光の表が揃った列で表示されることをテスト"""
        text = render(original_cheshire().expected)
        self.assertEqual(text, (
            "observable  weak value\n"
            "(Π1)_w      1+0i\n"
            "(Π2)_w      0+0i\n"
            "(Π1σx^p)_w  0+0i\n"
            "(Π2σx^p)_w  1+0i\n"
        ))

    def test_empty_table(self):
        self.assertEqual(render_table(WeakValueTable(())), "observable  weak value\n")

    def test_json(self):
        table = WeakValueTable((("Π1", 1), ("Π2σx^p", 0.5 - 0.25j)))
        data = json.loads(render(table, "json"))
        self.assertEqual(data, [{"label": "Π1", "re": 1.0, "im": 0.0}, {"label": "Π2σx^p", "re": 0.5, "im": -0.25}])
        self.assertIn("Π2σx^p", render(table, "json"))

    def test_csv(self):
        table = WeakValueTable((("Π1", 1), ("Π2σx^p", 0.5 - 0.25j)))
        self.assertEqual(render(table, "csv"), "label,re,im\nΠ1,1,0\nΠ2σx^p,0.5,-0.25\n")


class TestRenderOthers(unittest.TestCase):

    def test_record_json(self):
        """測定結果の JSON に weak_value の re, im が入ることをテスト"""
        data = json.loads(render(make_record(), "json"))
        self.assertEqual(list(data), ["g", "sigma", "success_probability", "position_mean", "momentum_mean", "weak_value"])
        self.assertEqual(data["weak_value"], {"re": 1.0, "im": 0.5})
        self.assertEqual(data["success_probability"], 0.25)

    def test_record_table_and_csv(self):
        record = make_record()
        table = render(record)
        self.assertTrue(table.startswith("quantity"))
        self.assertIn("inferred weak value  1+0.5i", table)
        lines = render(record, "csv").splitlines()
        self.assertEqual(lines[0], "g,sigma,success_probability,position_mean,momentum_mean,weak_value_re,weak_value_im")
        self.assertEqual(lines[1].split(",")[-2:], ["1", "0.5"])

    def test_records(self):
        records = [("Π1", make_record()), ("Π2σx^p", make_record(weak_value=0j))]
        table = render(records)
        self.assertEqual(table.splitlines()[0].split("  ")[0], "observable")
        self.assertIn("(Π2σx^p)_w", table)
        data = json.loads(render(records, "json"))
        self.assertEqual([row["label"] for row in data], ["Π1", "Π2σx^p"])
        self.assertEqual(render(records, "csv").splitlines()[0].split(",")[0], "label")

    def test_sweep(self):
        errors = [(0.2, 0.015625), (0.1, 0.00390625), (0.05, 0.0009765625)]
        self.assertEqual(render(errors, "csv"), "g,error\n0.20000000000000001,0.015625\n0.10000000000000001,0.00390625\n"
                                                 "0.050000000000000003,0.0009765625\n")
        self.assertEqual(render(errors).splitlines()[1].split(), ["0.2", "0.015625"])
        self.assertEqual(json.loads(render(errors, "json"))[2], {"g": 0.05, "error": 0.0009765625})

    def test_circuit_report(self):
        report = CircuitReport(circuit="photon_prep.qcc", kind="state", expect="eq28", fidelity=1.0, passed=True)
        table = render(report)
        self.assertIn("fidelity", table)
        self.assertIn("passed", table)
        data = json.loads(render(report, "json"))
        self.assertEqual(data["rank"], None)
        self.assertEqual(data["expect"], "eq28")
        header, row = render(report, "csv").splitlines()
        self.assertEqual(header, "circuit,kind,expect,fidelity,passed,rank,detector")
        self.assertTrue(row.startswith("photon_prep.qcc,state,eq28,1.0,True"))

    def test_scenario_list(self):
        text = render(SCENARIO_NAMES)
        for name in SCENARIO_NAMES:
            self.assertIn(name, text)
        self.assertEqual([row["name"] for row in json.loads(render(SCENARIO_NAMES, "json"))], list(SCENARIO_NAMES))


class TestRenderErrors(unittest.TestCase):

    def test_unknown_type(self):
        with patch('src.formatter.logger') as mock_logger:
            with self.assertRaises(TypeError):
                render([("a", "b")])
            mock_logger.error.assert_called_once()

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            render(original_cheshire().expected, "xml")
        with self.assertRaises(ValueError):
            render(make_record(), "yaml")

    def test_output_is_stable(self):
        """同じ入力を 2 回レンダリングしてバイト単位で一致することをテスト"""
        for fmt in ("table", "json", "csv"):
            with self.subTest(fmt=fmt):
                first = render(original_cheshire().expected, fmt).encode("utf-8")
                second = render(original_cheshire().expected, fmt).encode("utf-8")
                self.assertEqual(first, second)


if __name__ == '__main__':
    unittest.main()
