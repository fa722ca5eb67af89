"""Adam, the learning-rate schedule, checkpoints and the training loop."""

import asyncio
from types import SimpleNamespace

import numpy as np
import pytest

from src.data import SyntheticDataset
from src.shared.config import load_train_config
from src.shared.errors import ConfigurationError, FormatError, NonFiniteError, ShapeError
from src.shared.schemas import ConvSpec
from src.tensor import ParameterStore
from src.trainer import (
    Adam,
    Checkpoint,
    Trainer,
    adam_step,
    evaluate,
    evaluate_sharded,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
)
from src.trainer.loop import CSV_HEADER


@pytest.fixture
def dataset(desk_config):
    return SyntheticDataset(count=3, height=desk_config.height, width=desk_config.width, max_disp=16, seed=1)


class TestAdam:
    def test_zero_gradient_leaves_parameter(self):
        param = np.array([1.5, -2.0])
        m, v = np.zeros(2), np.zeros(2)
        adam_step(param, np.zeros(2), m, v, step=1, lr=0.1)
        np.testing.assert_array_equal(param, [1.5, -2.0])

    def test_constant_gradient_moves_by_learning_rate(self):
        param, m, v = np.zeros(1), np.zeros(1), np.zeros(1)
        for step in range(1, 11):
            before = param.copy()
            adam_step(param, np.array([2.0]), m, v, step=step, lr=0.01)
            assert before - param == pytest.approx(0.01, rel=1e-6)

    def test_minimizes_quadratic(self):
        param, m, v = np.zeros(1), np.zeros(1), np.zeros(1)
        for step in range(1, 301):
            adam_step(param, 2 * (param - 3.0), m, v, step=step, lr=0.1)
        assert param[0] == pytest.approx(3.0, abs=0.2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros(2), step=1, lr=0.1)

    def test_non_finite_gradient_names_parameter(self):
        with pytest.raises(NonFiniteError, match="conv_2.weight"):
            adam_step(np.zeros(1), np.array([np.nan]), np.zeros(1), np.zeros(1), 1, 0.1, name="conv_2.weight")

    def test_optimizer_treats_missing_grad_as_zero(self):
        store = ParameterStore(seed=0)
        weight, bias = store.conv("x", ConvSpec(kernel=1, in_channels=1, out_channels=1))
        before = weight.data.copy()
        weight.grad = np.ones_like(weight.data)
        optimizer = Adam(store)
        optimizer.step(0.5)
        np.testing.assert_allclose(weight.data, before - 0.5, rtol=1e-6)
        assert not bias.data.any()
        assert optimizer.state()[0] == 1

    def test_bad_gradient_leaves_every_parameter_untouched(self):
        store = ParameterStore(seed=0)
        spec = ConvSpec(kernel=1, in_channels=1, out_channels=1)
        first, _ = store.conv("a", spec)
        second, _ = store.conv("b", spec)
        before = first.data.copy()
        first.grad = np.ones_like(first.data)
        second.grad = np.full_like(second.data, np.nan)
        optimizer = Adam(store)
        with pytest.raises(NonFiniteError, match="b.weight"):
            optimizer.step(0.5)
        np.testing.assert_array_equal(first.data, before)
        assert not optimizer.m["a.weight"].any()
        assert optimizer.state()[0] == 0

    def test_load_state_checks_buffers(self):
        store = ParameterStore()
        store.conv("x", ConvSpec(kernel=1, in_channels=1, out_channels=1))
        with pytest.raises(ShapeError, match="x.weight"):
            Adam(store).load_state(1, {}, {})


class TestSchedule:
    def test_sceneflow_halves_every_100k(self):
        config = load_train_config(preset="sceneflow")
        assert lr_schedule(0, config) == pytest.approx(1e-4)
        assert lr_schedule(99_999, config) == pytest.approx(1e-4)
        assert lr_schedule(100_000, config) == pytest.approx(5e-5)
        assert lr_schedule(250_000, config) == pytest.approx(2.5e-5)

    def test_kitti_boundaries(self):
        config = load_train_config(preset="kitti")
        assert lr_schedule(19_999, config) == pytest.approx(2e-5)
        assert lr_schedule(20_000, config) == pytest.approx(1e-5)
        assert lr_schedule(120_000, config) == pytest.approx(5e-6)
        assert lr_schedule(139_999, config) == pytest.approx(5e-6)

    def test_boundaries_override_step_every(self):
        config = load_train_config(overrides={"lr_step_every": 10, "lr_boundaries": "100"})
        assert lr_schedule(50, config) == pytest.approx(config.learning_rate)

    def test_negative_iteration(self, desk_config):
        with pytest.raises(ValueError):
            lr_schedule(-1, desk_config)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        trainer.train_step()
        original = trainer.checkpoint()
        save_checkpoint(original, tmp_path / "c.msfn")

        loaded = load_checkpoint(tmp_path / "c.msfn")
        assert loaded.config == desk_config
        assert loaded.iteration == 1 and loaded.adam_step == 1
        assert loaded.generator_state == original.generator_state
        assert loaded.params.keys() == original.params.keys()
        for name, array in original.params.items():
            np.testing.assert_array_equal(loaded.params[name], array)
            np.testing.assert_array_equal(loaded.adam_v[name], original.adam_v[name])
        assert not (tmp_path / "c.msfn.tmp").exists()

    def _small(self, desk_config) -> Checkpoint:
        return Checkpoint(config=desk_config, iteration=3, params={"w": np.arange(6, dtype=np.float32).reshape(2, 3)})

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "none.msfn")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "c.msfn").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(FormatError, match="not an MSFN"):
            load_checkpoint(tmp_path / "c.msfn")

    def test_truncated(self, tmp_path, desk_config):
        path = tmp_path / "c.msfn"
        save_checkpoint(self._small(desk_config), path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path, desk_config):
        path = tmp_path / "c.msfn"
        save_checkpoint(self._small(desk_config), path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_checkpoint(path)

    def test_restore_rejects_other_config(self, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        other = trainer.checkpoint()
        other.config = desk_config.model_copy(update={"learning_rate": 0.5})
        with pytest.raises(ConfigurationError):
            trainer.restore(other)


class TestTrainer:
    def test_sample_size_must_match(self, desk_config):
        small = SyntheticDataset(count=1, height=64, width=64, max_disp=8)
        with pytest.raises(ConfigurationError):
            Trainer(desk_config, small)

    def test_identical_runs_give_identical_metrics(self, tmp_path, desk_config, dataset):
        first = Trainer(desk_config, dataset, metrics_path=tmp_path / "a.csv")
        second = Trainer(desk_config, dataset, metrics_path=tmp_path / "b.csv")
        first.train(2)
        second.train(2)
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 3 and lines[1].startswith("0,")

    def test_resume_is_trajectory_exact(self, tmp_path, desk_config, dataset):
        straight = Trainer(desk_config, dataset)
        straight.train(4)

        interrupted = Trainer(desk_config, dataset, checkpoint_dir=tmp_path)
        interrupted.train(2)
        resumed = Trainer.from_checkpoint(tmp_path / "last.msfn", dataset)
        assert resumed.iteration == 2
        resumed.train(4)

        assert [r.loss for r in resumed.history] == [r.loss for r in straight.history[2:]]
        for name, array in straight.network.params.state_dict().items():
            np.testing.assert_array_equal(resumed.network.params[name].data, array)

    def test_periodic_checkpoints(self, tmp_path, desk_config, dataset):
        config = desk_config.model_copy(update={"checkpoint_every": 1})
        Trainer(config, dataset, checkpoint_dir=tmp_path).train(2)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["iter_0000001.msfn", "iter_0000002.msfn", "last.msfn"]

    def test_record_fields(self, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        record = trainer.train_step()
        assert record.iteration == 0 and trainer.iteration == 1
        assert record.lr == pytest.approx(desk_config.learning_rate)
        assert len(record.components) == 6 + desk_config.stack_count
        assert np.isfinite(record.loss) and record.epe >= 0

    def test_non_finite_reports_iteration_and_layer(self, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        trainer.network.params["conv_1.weight"].data[...] = np.nan
        with pytest.raises(NonFiniteError) as info:
            trainer.train_step()
        assert info.value.iteration == 0
        assert info.value.layer == "conv_1a"


class TestEvaluation:
    def test_perfect_prediction_scores_zero(self, dataset):
        def network(left, right):
            for index in range(len(dataset)):
                if dataset[index].left is left:
                    return SimpleNamespace(final=dataset[index].gt_disparity)
            raise AssertionError("unknown sample")

        report = evaluate(network, dataset)
        assert report.epe == 0.0 and report.three_px == 0.0 and report.d1 == 0.0
        assert [s.index for s in report.samples] == [0, 1, 2]

    def test_sharded_matches_sequential(self, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        sequential = trainer.evaluate(dataset)
        sharded = asyncio.run(trainer.evaluate_sharded(dataset, workers=2))
        assert [s.model_dump() for s in sharded.samples] == [s.model_dump() for s in sequential.samples]
        assert sharded.epe == sequential.epe

    @pytest.mark.asyncio
    async def test_more_workers_than_samples(self, desk_config, dataset):
        trainer = Trainer(desk_config, dataset)
        report = await evaluate_sharded(trainer.network, dataset, workers=8)
        assert len(report.samples) == 3
