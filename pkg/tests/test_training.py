"""Training loop: loss math, determinism, resumption, freezing."""

import math

import numpy as np
import pytest
import torch

from covidscreen.errors import DivergenceDetected, EmptySplit, ShapeMismatch
from covidscreen.manifest import Label, Split, load_manifest
from covidscreen.models import (AuxExtractor, AuxKind, build_model,
                                constant_aux, state_hash)
from covidscreen.preprocess import PreprocessConfig
from covidscreen.training import (TrainConfig, _batch_slices, bce_loss, resume,
                                  target_vector, train)

from conftest import smoke_spec, tiny_cxr_spec, write_dataset


def smoke_preprocess() -> PreprocessConfig:
    return PreprocessConfig(target_size=(128, 128, 3), augment_enabled=False)


def smoke_train(**overrides) -> TrainConfig:
    base = dict(learning_rate=1e-3, batch_size=10, max_epochs=3, seed=42,
                early_stop_patience=None)
    base.update(overrides)
    return TrainConfig(**base)


def build_smoke_model(seed=42, **spec_overrides):
    torch.manual_seed(seed)
    return build_model(smoke_spec(**spec_overrides))


class TestBceLoss:
    def test_half_probability(self):
        loss = bce_loss(torch.tensor([[0.5]]), torch.tensor([[1.0]]))
        assert abs(float(loss) - math.log(2)) < 1e-6

    def test_exact_prediction(self):
        probs = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        loss = bce_loss(probs, probs.clone())
        assert float(loss) < 1e-6

    def test_hand_computed_pair(self):
        loss = bce_loss(torch.tensor([[0.9, 0.1]]), torch.tensor([[1.0, 0.0]]))
        assert abs(float(loss) - 0.105361) < 1e-6   # = -ln 0.9

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            bce_loss(torch.zeros(2, 3), torch.zeros(2, 2))

    def test_finite_under_extreme_probs(self):
        loss = bce_loss(torch.tensor([[0.0, 1.0]]), torch.tensor([[1.0, 0.0]]))
        assert torch.isfinite(loss)

    def test_class_weights(self):
        probs = torch.tensor([[0.5, 0.5]])
        targets = torch.tensor([[1.0, 1.0]])
        unweighted = bce_loss(probs, targets)
        weighted = bce_loss(probs, targets, class_weights=(2.0, 0.0))
        assert abs(float(unweighted) - math.log(2)) < 1e-6
        assert abs(float(weighted) - math.log(2)) < 1e-6  # mean of (2ln2, 0)

    def test_random_init_first_batch_near_ln2(self):
        # Symmetric init keeps outputs near 0.5, so BCE starts near ln 2.
        for seed in range(10):
            model = build_smoke_model(seed=seed)
            model.eval()
            gen = torch.Generator().manual_seed(100 + seed)
            x = torch.randn(8, 3, 128, 128, generator=gen)
            targets = torch.zeros(8, 2)
            targets[::2, 0] = 1.0
            targets[1::2, 1] = 1.0
            with torch.no_grad():
                loss = bce_loss(model(x), targets)
            assert abs(float(loss) - math.log(2)) < 0.15, f"seed {seed}"


class TestTargetVector:
    def test_one_hot(self):
        assert target_vector(Label.COVID19, 3).tolist() == [1, 0, 0]
        assert target_vector(Label.NORMAL, 3).tolist() == [0, 0, 1]

    def test_binary(self):
        assert target_vector(Label.COVID19, 1).tolist() == [1.0]
        assert target_vector(Label.NORMAL, 1).tolist() == [0.0]

    def test_width_too_small(self):
        with pytest.raises(ShapeMismatch):
            target_vector(Label.NORMAL, 2)


class TestBatchSlices:
    def test_lone_trailing_record_merged(self):
        slices = _batch_slices(21, 10)
        assert [s.stop - s.start for s in slices] == [10, 11]

    def test_exact_batches(self):
        assert [s.stop - s.start for s in _batch_slices(20, 10)] == [10, 10]

    def test_single_record_total(self):
        assert [s.stop - s.start for s in _batch_slices(1, 10)] == [1]


class TestTrainLoop:
    def test_empty_splits_rejected(self, tmp_path):
        path = write_dataset(tmp_path, {Split.TRAIN: {Label.COVID19: 2}})
        manifest = load_manifest(path)
        model = build_smoke_model()
        with pytest.raises(EmptySplit):
            train(model, manifest, smoke_preprocess(), smoke_train())

    def test_identical_seeds_identical_loss_log(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        results = []
        for _ in range(2):
            model = build_smoke_model()
            result = train(model, manifest, smoke_preprocess(),
                           smoke_train(max_epochs=2), cache_images=True)
            results.append(result)
        a, b = results
        assert a.history[0].step_losses == b.history[0].step_losses
        assert a.history[1].step_losses == b.history[1].step_losses

    def test_augmentation_changes_training(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        cfg_on = PreprocessConfig(target_size=(128, 128, 3), augment_enabled=True)
        losses = []
        for cfg in (smoke_preprocess(), cfg_on):
            model = build_smoke_model()
            result = train(model, manifest, cfg, smoke_train(max_epochs=1),
                           cache_images=True)
            losses.append(result.history[0].step_losses)
        assert losses[0] != losses[1]

    def test_gradient_flow_everywhere(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        model = build_smoke_model()
        before = {name: tensor.detach().clone()
                  for name, tensor in model.named_parameters()}
        train(model, manifest, smoke_preprocess(), smoke_train(max_epochs=1),
              cache_images=True)
        blocks = {"backbone": False, "attention": False, "post_norm": False,
                  "hidden": False, "output": False}
        for name, tensor in model.named_parameters():
            block = name.split(".")[0]
            if not torch.equal(before[name], tensor):
                blocks[block] = True
        assert all(blocks.values()), blocks

    def test_best_auc_monotone_in_history(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        model = build_smoke_model()
        result = train(model, manifest, smoke_preprocess(),
                       smoke_train(max_epochs=3), cache_images=True)
        best = result.best.metadata["best_val_auc"]
        assert best == max(h.val_auc for h in result.history)

    def test_divergence_detected(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        model = build_smoke_model()
        absurd = smoke_train(learning_rate=float("inf"), max_epochs=5)
        with pytest.raises(DivergenceDetected) as exc_info:
            train(model, manifest, smoke_preprocess(), absurd, cache_images=True)
        checkpoint = exc_info.value.checkpoint
        assert checkpoint is not None
        for tensor in checkpoint.state.values():
            assert np.isfinite(tensor).all() or tensor.dtype.kind in "iu"


class TestResume:
    def test_two_epochs_equals_one_plus_resume(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)

        straight = build_smoke_model()
        full = train(straight, manifest, smoke_preprocess(),
                     smoke_train(max_epochs=2), cache_images=True)

        stepwise = build_smoke_model()
        first = train(stepwise, manifest, smoke_preprocess(),
                      smoke_train(max_epochs=1), cache_images=True)
        resumed = resume(first.final, manifest, smoke_preprocess(),
                         smoke_train(max_epochs=2), cache_images=True)

        assert set(full.final.state) == set(resumed.final.state)
        for name in full.final.state:
            assert np.array_equal(full.final.state[name],
                                  resumed.final.state[name]), name

    def test_resume_spec_mismatch(self, two_class_manifest):
        from covidscreen.errors import VersionMismatch

        manifest = load_manifest(two_class_manifest)
        model = build_smoke_model()
        result = train(model, manifest, smoke_preprocess(),
                       smoke_train(max_epochs=1), cache_images=True)
        other = build_smoke_model(backbone_channels=16)
        with pytest.raises(VersionMismatch):
            resume(result.final, manifest, smoke_preprocess(),
                   smoke_train(max_epochs=2), model=other)

    def test_resume_after_divergence(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        model = build_smoke_model()
        with pytest.raises(DivergenceDetected) as exc_info:
            train(model, manifest, smoke_preprocess(),
                  smoke_train(learning_rate=float("inf"), max_epochs=4),
                  cache_images=True)
        rescued = resume(exc_info.value.checkpoint, manifest, smoke_preprocess(),
                         smoke_train(max_epochs=2), cache_images=True)
        assert all(np.isfinite(t).all() for t in rescued.final.state.values()
                   if t.dtype.kind == "f")


class TestFreezing:
    def test_aux_parameters_frozen_through_training(self, two_class_manifest):
        manifest = load_manifest(two_class_manifest)
        torch.manual_seed(21)
        model = build_model(tiny_cxr_spec(input_size=128, attention_kernels=(7, 5)))

        torch.manual_seed(22)
        aux6 = build_model(smoke_spec(head_width=3))  # reuse a net as extractor
        frozen_before = state_hash(aux6)

        class SixFromThree(torch.nn.Module):
            def __init__(self, inner):
                super().__init__()
                self.inner = inner

            def forward(self, x):
                probs = self.inner(x)
                return torch.cat([probs, probs], dim=1)

        wrapper = SixFromThree(aux6)
        model.attach_aux(AuxKind.CHEXPERT6, AuxExtractor(wrapper, 6))
        model.attach_aux(AuxKind.PNEUMONIA2, constant_aux([0.5, 0.5]))

        train(model, manifest, smoke_preprocess(), smoke_train(max_epochs=2),
              cache_images=True)
        assert state_hash(aux6) == frozen_before
