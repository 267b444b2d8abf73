import unittest
import math

import numpy as np

from src.circuit import (
    BeamSplitter,
    Circuit,
    CircuitSpace,
    Detector,
    HalfWavePlate,
    InputSpec,
    Mirror,
    PhaseShifter,
    Platform,
    QPlate,
    RFFlipper,
    SpinFlipper,
    apply_element,
    detect,
    effective_postselection_projector,
    element_unitary,
    end_to_end_weak_experiment,
    internal_sigma_x,
    observable_family,
    path_projector,
    reference_state,
    run,
    verify_circuit,
)
from src.circuit_parser import load_circuit
from src.exceptions import (
    CircuitCompatibilityError,
    CircuitSemanticError,
    ConfigurationError,
    NormalizationError,
    NullPostSelectionError,
    OamOverflowError,
    SpaceMismatchError,
)
from src.hilbert import OperatorExpr, SpaceDescriptor, StateVector, apply, fidelity_up_to_phase, make_basis_state
from src.pointer import MeterConfig

PHOTON = CircuitSpace(Platform.PHOTON, 3)
NEUTRON = CircuitSpace(Platform.NEUTRON, 3)

# oam のインデックス
OAM_M4, OAM_M2, OAM_0, OAM_P2, OAM_P4 = range(5)
L, R = 0, 1


def random_state(rng, space, internal_limit=None):
    descriptor = space.descriptor
    vector = rng.normal(size=descriptor.total_dim) + 1j * rng.normal(size=descriptor.total_dim)
    if internal_limit is not None:
        vector = vector * internal_limit(descriptor)
    return StateVector.from_dense(descriptor, vector / np.linalg.norm(vector))


def inner_oam_mask(descriptor):
    """oam が -2..+2 の成分だけを残すマスク"""
    mask = np.zeros(descriptor.dims)
    mask[:, :, OAM_M2:OAM_P2 + 1] = 1.0
    return mask.reshape(-1)


def random_elements(rng, space, count, with_qplate=False):
    elements = []
    for _ in range(count):
        mode = int(rng.integers(space.modes))
        other = int((mode + 1 + rng.integers(space.modes - 1)) % space.modes)
        choices = [
            lambda: BeamSplitter(mode, other, float(rng.uniform(0.05, 0.95)), dagger=bool(rng.integers(2))),
            lambda: Mirror(mode),
            lambda: PhaseShifter(mode, float(rng.uniform(-2, 2))),
        ]
        if space.platform is Platform.PHOTON:
            choices.append(lambda: HalfWavePlate(mode))
            if with_qplate:
                choices.append(lambda: QPlate(mode))
        else:
            choices += [lambda: SpinFlipper(mode), lambda: RFFlipper(mode)]
        elements.append(choices[int(rng.integers(len(choices)))]())
    return elements


class TestElements(unittest.TestCase):

    def test_beam_splitter_one_third(self):
        """t=1/3 のビームスプリッタの透過・反射振幅をテスト"""
        state = make_basis_state(PHOTON.descriptor, [0, L, OAM_0])
        result = apply_element(BeamSplitter(0, 1, 1 / 3), PHOTON, state)
        self.assertAlmostEqual(result.amplitude([0, L, OAM_0]), 1 / math.sqrt(3), delta=1e-15)
        self.assertAlmostEqual(result.amplitude([1, L, OAM_0]), 1j * math.sqrt(2 / 3), delta=1e-15)
        self.assertEqual(len(result.amplitudes), 2)

    def test_qplate_lowers_right_circular(self):
        """Q-plate が |R, 0> を |L, -2> に、|L, 0> を |R, +2> にすることをテスト"""
        result = apply_element(QPlate(0), PHOTON, make_basis_state(PHOTON.descriptor, [0, R, OAM_0]))
        self.assertEqual(dict(result.amplitudes), {(0, L, OAM_M2): 1 + 0j})
        result = apply_element(QPlate(0), PHOTON, make_basis_state(PHOTON.descriptor, [0, L, OAM_0]))
        self.assertEqual(dict(result.amplitudes), {(0, R, OAM_P2): 1 + 0j})

    def test_qplate_overflow(self):
        with self.assertRaises(OamOverflowError):
            apply_element(QPlate(0), PHOTON, make_basis_state(PHOTON.descriptor, [0, L, OAM_P4]))
        with self.assertRaises(OamOverflowError):
            apply_element(QPlate(1), PHOTON, make_basis_state(PHOTON.descriptor, [1, R, OAM_M4]))

    def test_qplate_unitary_does_not_wrap(self):
        """Q-plate の行列が |L,+4> と |R,-4> を反対側の端へ回さないことをテスト"""
        unitary = element_unitary(QPlate(0), PHOTON)
        for index in ([0, L, OAM_P4], [0, R, OAM_M4]):
            with self.subTest(index=index):
                result = apply(unitary, make_basis_state(PHOTON.descriptor, index))
                self.assertAlmostEqual(result.norm_squared(), 0.0, delta=1e-15)
        wrapped = apply(element_unitary(QPlate(0), PHOTON, cyclic=True), make_basis_state(PHOTON.descriptor, [0, L, OAM_P4]))
        self.assertEqual(dict(wrapped.amplitudes), {(0, R, OAM_M4): 1 + 0j})
        inside = apply(unitary, make_basis_state(PHOTON.descriptor, [0, L, OAM_P2]))
        self.assertEqual(dict(inside.amplitudes), {(0, R, OAM_P4): 1 + 0j})

    def test_qplate_ignores_other_modes(self):
        state = make_basis_state(PHOTON.descriptor, [2, L, OAM_P4])
        self.assertEqual(dict(apply_element(QPlate(0), PHOTON, state).amplitudes), dict(state.amplitudes))

    def test_rf_flipper(self):
        """RF フリッパーが |↑,E0> を i|↓,E0-ħω> にすることをテスト"""
        result = apply_element(RFFlipper(1), NEUTRON, make_basis_state(NEUTRON.descriptor, [1, 0, 0]))
        self.assertEqual(dict(result.amplitudes), {(1, 1, 1): 1j})

    def test_mirror_and_phase(self):
        state = make_basis_state(PHOTON.descriptor, [2, R, OAM_P2])
        self.assertAlmostEqual(apply_element(Mirror(2), PHOTON, state).amplitude([2, R, OAM_P2]), 1j)
        shifted = apply_element(PhaseShifter(2, -0.5), PHOTON, state)
        self.assertAlmostEqual(shifted.amplitude([2, R, OAM_P2]), -1j, delta=1e-15)

    def test_platform_mismatch(self):
        """光子用素子を中性子の空間で使うとエラーになることをテスト"""
        with self.assertRaises(CircuitCompatibilityError):
            element_unitary(HalfWavePlate(0), NEUTRON)
        with self.assertRaises(CircuitCompatibilityError):
            element_unitary(RFFlipper(0), PHOTON)

    def test_invalid_elements(self):
        with self.assertRaises(ConfigurationError):
            BeamSplitter(0, 0, 0.5)
        with self.assertRaises(ConfigurationError):
            BeamSplitter(0, 1, 1.0)
        with self.assertRaises(CircuitSemanticError):
            Circuit(PHOTON, (Mirror(3),))
        with self.assertRaises(ConfigurationError):
            CircuitSpace(Platform.PHOTON, 1)

    def test_duplicate_detectors(self):
        with self.assertRaises(CircuitSemanticError):
            Circuit(PHOTON, (Detector(0, "D1"), Detector(0, "D2")))
        with self.assertRaises(CircuitSemanticError):
            Circuit(PHOTON, (Detector(0, "D1"), Detector(1, "D1")))

    def test_space_from_descriptor(self):
        self.assertEqual(CircuitSpace.from_descriptor(NEUTRON.descriptor), NEUTRON)
        with self.assertRaises(CircuitCompatibilityError):
            CircuitSpace.from_descriptor(SpaceDescriptor.of(("path", 3), ("pol", 2)))


class TestElementProperties(unittest.TestCase):
    """乱数で生成した素子・状態での性質テスト"""

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_every_element_is_unitary(self):
        """全ての素子のユニタリが U†U = I を満たすことをテスト"""
        for case in range(120):
            space = (PHOTON, NEUTRON, CircuitSpace(Platform.PHOTON, 4))[case % 3]
            element = random_elements(self.rng, space, 1, with_qplate=True)[0]
            with self.subTest(case=case, element=element):
                matrix = element_unitary(element, space, cyclic=True).to_dense()
                np.testing.assert_allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=1e-12)

    def test_run_preserves_norm(self):
        for case in range(120):
            space = (PHOTON, NEUTRON)[case % 2]
            circuit = Circuit(space, tuple(random_elements(self.rng, space, 8)))
            with self.subTest(case=case):
                output = run(circuit, random_state(self.rng, space))
                self.assertAlmostEqual(output.norm_squared(), 1.0, delta=1e-12)

    def test_qplate_preserves_norm_inside_truncation(self):
        for case in range(100):
            with self.subTest(case=case):
                state = random_state(self.rng, PHOTON, internal_limit=inner_oam_mask)
                output = run(Circuit(PHOTON, (QPlate(int(self.rng.integers(3))),)), state)
                self.assertAlmostEqual(output.norm_squared(), 1.0, delta=1e-12)

    def test_beam_splitter_inverse(self):
        """ビームスプリッタの後に共役な素子を置くと入力に戻ることをテスト"""
        for case in range(100):
            with self.subTest(case=case):
                t = float(self.rng.uniform(0.01, 0.99))
                circuit = Circuit(PHOTON, (BeamSplitter(0, 2, t), BeamSplitter(0, 2, t, dagger=True)))
                state = random_state(self.rng, PHOTON)
                self.assertAlmostEqual(fidelity_up_to_phase(run(circuit, state), state), 1.0, delta=1e-12)

    def test_involutions(self):
        """半波長板・スピンフリッパー・Q-plate を 2 回かけると元に戻ることをテスト"""
        for case in range(100):
            mode = int(self.rng.integers(3))
            if case % 3 == 0:
                space, element, mask = NEUTRON, SpinFlipper(mode), None
            elif case % 3 == 1:
                space, element, mask = PHOTON, HalfWavePlate(mode), None
            else:
                space, element, mask = PHOTON, QPlate(mode), inner_oam_mask
            with self.subTest(case=case, element=element):
                state = random_state(self.rng, space, internal_limit=mask)
                output = run(Circuit(space, (element, element)), state)
                np.testing.assert_allclose(output.to_dense(), state.to_dense(), atol=1e-12)

    def test_detector_probabilities_sum_to_one(self):
        detectors = tuple(Detector(mode, f"D{mode + 1}") for mode in range(3))
        for case in range(100):
            space = (PHOTON, NEUTRON)[case % 2]
            circuit = Circuit(space, tuple(random_elements(self.rng, space, 6)) + detectors)
            with self.subTest(case=case):
                outcomes = detect(circuit, run(circuit, random_state(self.rng, space)))
                self.assertAlmostEqual(sum(o.probability for o in outcomes), 1.0, delta=1e-10)


class TestRun(unittest.TestCase):

    def test_photon_preparation(self):
        """光子の準備回路が事前選択状態を作ることをテスト"""
        circuit = load_circuit("photon_prep")
        output = run(circuit, circuit.input_state())
        self.assertGreaterEqual(fidelity_up_to_phase(output, reference_state("eq28")), 1 - 1e-12)

    def test_neutron_preparation(self):
        circuit = load_circuit("neutron_prep")
        output = run(circuit, circuit.input_state())
        self.assertGreaterEqual(fidelity_up_to_phase(output, reference_state("eq35")), 1 - 1e-12)

    def test_empty_circuit(self):
        state = make_basis_state(PHOTON.descriptor, [1, R, OAM_M2])
        self.assertEqual(dict(run(Circuit(PHOTON), state).amplitudes), dict(state.amplitudes))

    def test_input_validation(self):
        state = make_basis_state(PHOTON.descriptor, [0, L, OAM_0])
        with self.assertRaises(NormalizationError):
            run(Circuit(PHOTON), state.scaled(2))
        with self.assertRaises(SpaceMismatchError):
            run(Circuit(NEUTRON), state)

    def test_element_index_is_attached(self):
        """素子で起きた例外に素子番号が付くことをテスト"""
        circuit = Circuit(PHOTON, (Mirror(0), QPlate(0), QPlate(0)))
        state = make_basis_state(PHOTON.descriptor, [0, L, OAM_P4])
        with self.assertRaises(OamOverflowError) as ctx:
            run(circuit, state)
        self.assertEqual(ctx.exception.element_index, 1)
        self.assertIn("while applying element 1 (qp)", ctx.exception.__notes__)

    def test_input_state_defaults(self):
        circuit = Circuit(PHOTON, (), InputSpec(mode=2, internal=(("pol", R),)))
        self.assertEqual(dict(circuit.input_state().amplitudes), {(2, R, OAM_0): 1 + 0j})
        with self.assertRaises(ConfigurationError):
            Circuit(PHOTON).input_state()


class TestDetection(unittest.TestCase):

    def setUp(self):
        self.postsel = load_circuit("photon_postsel_filtered")

    def test_final_state_reaches_d3(self):
        """事後選択状態を入れると D3 だけが鳴ることをテスト"""
        outcomes = {o.name: o for o in detect(self.postsel, run(self.postsel, reference_state("eq33")))}
        self.assertAlmostEqual(outcomes["D3"].probability, 1.0, delta=1e-12)
        self.assertLessEqual(outcomes["D1"].probability, 1e-12)
        self.assertLessEqual(outcomes["D2"].probability, 1e-12)
        self.assertAlmostEqual(outcomes["D3"].state.norm_squared(), 1.0, delta=1e-12)

    def test_initial_state_click_probability(self):
        """事前選択状態での D3 (フィルタ付き) の確率が 1/9 になることをテスト"""
        outcomes = {o.name: o for o in detect(self.postsel, run(self.postsel, reference_state("eq28")))}
        self.assertAlmostEqual(outcomes["D3"].probability, 1 / 9, delta=1e-12)

    def test_single_mode_routing(self):
        circuit = Circuit(PHOTON, (Detector(1, "D"),))
        outcomes = detect(circuit, make_basis_state(PHOTON.descriptor, [1, R, OAM_M2]))
        self.assertEqual(outcomes[0].probability, 1.0)

    def test_conditioning_on_silent_detector(self):
        output = run(self.postsel, reference_state("eq33"))
        with self.assertRaises(NullPostSelectionError) as ctx:
            detect(self.postsel, output, condition_on="D1")
        self.assertEqual(ctx.exception.label, "D1")
        with self.assertRaises(ConfigurationError):
            detect(self.postsel, output, condition_on="D9")


class TestEffectiveProjector(unittest.TestCase):

    def test_filtered_network_is_rank_one(self):
        """フィルタ付き D3 の実効射影が rank 1 で事後選択状態に一致することをテスト"""
        report = effective_postselection_projector(load_circuit("photon_postsel_filtered"), "D3",
                                                   target=reference_state("eq33"))
        self.assertEqual(report.rank, 1)
        self.assertGreaterEqual(report.fidelity_to_target, 1 - 1e-12)

    def test_unfiltered_network_is_rank_ten(self):
        report = effective_postselection_projector(load_circuit("photon_postsel_paper"), "D3",
                                                   target=reference_state("eq33"))
        self.assertEqual(report.rank, 10)
        self.assertIsNone(report.range_state)
        self.assertIsNone(report.fidelity_to_target)

    def test_neutron_network_is_rank_one(self):
        report = effective_postselection_projector(load_circuit("neutron_postsel"), "D3",
                                                   target=reference_state("eq36"))
        self.assertEqual(report.rank, 1)
        self.assertGreaterEqual(report.fidelity_to_target, 1 - 1e-12)

    def test_identity_circuit_rank(self):
        """素子の無い回路では rank が内部自由度の次元になることをテスト"""
        for space, expected in ((PHOTON, 10), (NEUTRON, 4)):
            with self.subTest(platform=space.platform):
                report = effective_postselection_projector(Circuit(space, (Detector(0, "D1"),)), "D1")
                self.assertEqual(report.rank, expected)

    def test_overflowing_inputs_are_flagged(self):
        """Q-plate で oam の端を越える入力基底が引き戻しから外れ、件数が報告されることをテスト"""
        circuit = load_circuit("photon_postsel_paper")
        report = effective_postselection_projector(circuit, "D3")
        self.assertEqual(report.overflow_inputs, 4)
        self.assertEqual(report.rank, 10)
        with self.assertRaises(OamOverflowError):
            circuit.composed_unitary(strict=True)
        self.assertEqual(effective_postselection_projector(load_circuit("photon_postsel_filtered"), "D3").overflow_inputs, 0)

    def test_composed_unitary_matches_run(self):
        """合成行列をかけた結果が run と一致し、端を越える振幅を混ぜないことをテスト"""
        circuit = Circuit(PHOTON, (QPlate(1), QPlate(1)))
        unitary = circuit.composed_unitary()
        lost = make_basis_state(PHOTON.descriptor, [1, L, OAM_P4])
        self.assertAlmostEqual(float(np.linalg.norm(unitary @ lost.to_dense())), 0.0, delta=1e-15)
        kept = make_basis_state(PHOTON.descriptor, [1, R, OAM_P2])
        np.testing.assert_allclose(unitary @ kept.to_dense(), run(circuit, kept).to_dense(), atol=1e-15)

    def test_unfiltered_network_routes_initial_state_to_d3(self):
        circuit = load_circuit("photon_postsel_paper")
        outcomes = {o.name: o.probability for o in detect(circuit, run(circuit, reference_state("eq28")))}
        self.assertAlmostEqual(outcomes["D3"], 1.0, delta=1e-12)


class TestVerifyCircuit(unittest.TestCase):

    def test_state_report(self):
        report = verify_circuit(load_circuit("photon_prep"), "eq28", name="photon_prep.qcc")
        self.assertEqual((report.kind, report.passed, report.circuit), ("state", True, "photon_prep.qcc"))
        self.assertIsNone(report.rank)

    def test_projector_report(self):
        report = verify_circuit(load_circuit("neutron_postsel"), "eq36")
        self.assertEqual((report.kind, report.passed, report.rank, report.detector), ("projector", True, 1, "D3"))

    def test_rank_deficient_projector_fails(self):
        report = verify_circuit(load_circuit("photon_postsel_paper"), "eq33")
        self.assertFalse(report.passed)
        self.assertEqual(report.rank, 10)
        self.assertEqual(report.fidelity, 0.0)

    def test_reference_state_checks(self):
        with self.assertRaises(ConfigurationError):
            reference_state("eq99")
        with self.assertRaises(CircuitCompatibilityError):
            verify_circuit(load_circuit("neutron_prep"), "eq28")


class TestObservables(unittest.TestCase):

    def test_family_labels(self):
        labels = [label for label, _ in observable_family(PHOTON)]
        self.assertEqual(labels[:3], ["Π1", "Π2", "Π3"])
        self.assertIn("Π2σx^pol", labels)
        self.assertIn("Π3σx^oam", labels)
        self.assertIn("Π1σx^energy", [label for label, _ in observable_family(NEUTRON)])

    def test_oam_sigma_x_swaps_plus_minus_two(self):
        result = apply_element(Mirror(0), PHOTON, make_basis_state(PHOTON.descriptor, [2, R, OAM_M2]))
        flipped = internal_sigma_x(PHOTON, "oam")
        self.assertEqual(dict(apply(flipped, result).amplitudes), {(2, R, OAM_P2): 1 + 0j})
        with self.assertRaises(CircuitCompatibilityError):
            internal_sigma_x(PHOTON, "spin")


class TestEndToEnd(unittest.TestCase):

    def setUp(self):
        self.prep = load_circuit("photon_prep")
        self.postsel = load_circuit("photon_postsel_filtered")
        self.meter = MeterConfig(sigma=1.0, g=0.01)

    def test_photon_weak_values(self):
        """回路全体を通した弱測定で (Π1, Π2σx^pol, Π3σx^oam) = (1, 1, 1) をテスト"""
        observables = {
            "Π1": path_projector(PHOTON, 0),
            "Π2σx^pol": path_projector(PHOTON, 1) @ internal_sigma_x(PHOTON, "pol"),
            "Π3σx^oam": path_projector(PHOTON, 2) @ internal_sigma_x(PHOTON, "oam"),
        }
        for label, op in observables.items():
            with self.subTest(observable=label):
                record = end_to_end_weak_experiment(self.prep, op, self.meter, self.postsel, "D3")
                self.assertAlmostEqual(record.inferred_weak_value, 1, delta=1e-2)

    def test_identity_observable(self):
        record = end_to_end_weak_experiment(self.prep, OperatorExpr.identity(PHOTON.descriptor), self.meter,
                                            self.postsel, "D3")
        self.assertAlmostEqual(record.inferred_weak_value, 1, delta=1e-9)
        self.assertAlmostEqual(record.success_probability, 1 / 9, delta=1e-9)

    def test_rank_deficient_postselection(self):
        """rank が 1 でない事後選択では rank を添えたエラーになることをテスト"""
        with self.assertRaises(ConfigurationError) as ctx:
            end_to_end_weak_experiment(self.prep, path_projector(PHOTON, 0), self.meter,
                                       load_circuit("photon_postsel_paper"), "D3")
        self.assertEqual(ctx.exception.rank, 10)

    def test_platform_mismatch(self):
        with self.assertRaises(CircuitCompatibilityError):
            end_to_end_weak_experiment(self.prep, path_projector(PHOTON, 0), self.meter,
                                       load_circuit("neutron_postsel"), "D3")


if __name__ == '__main__':
    unittest.main()
