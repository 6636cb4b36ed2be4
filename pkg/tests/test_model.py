import numpy as np
import pytest

from cmask import masking
from cmask.data import synth_stems
from cmask.errors import FormatError
from cmask.model import SourceModel, apply_mask_op, complex_mask_op, mask_from_output
from cmask.nn.checkpoint import dumps, loads
from cmask.nn.tensor import Tensor
from cmask.nn.unet import UNetConfig
from cmask.stft import StftParams, Waveform
from cmask.training import Segment, TrainConfig, Trainer, batch_loss, prepare_example

from gradcheck import check_op

SMALL = StftParams(window_size=64, hop_size=16)


def small_model(mask="complex", seed=0, dtype="float64"):
    ch = 2 if mask == "complex" else 1
    cfg = UNetConfig(depth=2, channels=[3, 4], in_channels=ch, out_channels=ch, seed=seed, dtype=dtype)
    return SourceModel.create(cfg, mask, stft_params=SMALL, padded_bins=36)


def test_complex_mask_op_matches_numpy(rng):
    o = rng.normal(size=(2, 2, 3, 4)) * 3
    o[0, :, 0, 0] = 0
    out = complex_mask_op(Tensor(o)).data
    ref = masking.complex_mask_from_output(o[:, 0] + 1j * o[:, 1])
    np.testing.assert_allclose(out[:, 0] + 1j * out[:, 1], ref, atol=1e-15)


@pytest.mark.parametrize("scale", [1e-3, 0.1, 1.0, 4.0])
def test_complex_mask_op_gradient(scale):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        assert check_op(complex_mask_op, [rng.normal(size=(2, 2, 3, 3)) * scale], rng, h=1e-7 * scale) < 1e-5


@pytest.mark.parametrize("mask_type", ["real", "complex"])
def test_apply_mask_op(rng, mask_type):
    ch = 1 if mask_type == "real" else 2
    o = rng.normal(size=(2, ch, 3, 4))
    x = rng.normal(size=(2, 2, 3, 4))
    est = apply_mask_op(mask_from_output(Tensor(o), mask_type), x, mask_type).data
    xc = x[:, 0] + 1j * x[:, 1]
    m = (masking.real_mask_from_output(o[:, 0]) if mask_type == "real"
         else masking.complex_mask_from_output(o[:, 0] + 1j * o[:, 1]))
    np.testing.assert_allclose(est[:, 0] + 1j * est[:, 1], m * xc, atol=1e-12)
    assert check_op(lambda t: apply_mask_op(mask_from_output(t, mask_type), x, mask_type), [o], rng) < 1e-5


@pytest.mark.parametrize("loss", ["mag", "sdr", "sdr+mag"])
@pytest.mark.parametrize("whole", [True, False])
def test_batch_loss_gradient(loss, whole):
    rng = np.random.default_rng(7)
    model = small_model()
    stems = synth_stems(1, duration_s=0.05)
    ex = prepare_example(stems, model, patch_frames=32)
    assert ex.num_patches >= 2
    seg = Segment(ex, 0, ex.num_patches, 0) if whole else Segment(ex, 1, 1, 0)
    shape = (seg.num_patches, 2, 32, SMALL.num_bins)
    est = ex.mixture_ri[seg.first_patch:seg.first_patch + seg.num_patches] * rng.uniform(0.2, 1, shape)
    # keep every bin well away from the L1 kinks (|est| == |target| and |est| == 0)
    est = est + 0.05 * np.max(np.abs(est)) * rng.choice([-1, 1], shape)
    err = check_op(lambda t: batch_loss(t, [seg], loss, SMALL), [est], rng, max_entries=60,
                   projection=np.array(1.0))
    assert err < 1e-5


def test_separate_shapes_and_silence():
    model = small_model()
    out = model.separate(Waveform(np.zeros(1000)))
    assert len(out) == 1000 and not np.any(out.samples)
    stems = synth_stems(0, 0.1)
    assert len(model.separate(stems.mixture)) == len(stems)


def test_checkpoint_round_trip_model(rng):
    model = small_model(mask="real", seed=4, dtype="float32")
    stems = synth_stems(2, 0.1)
    before = model.separate(stems.mixture).samples
    back = SourceModel.from_checkpoint(loads(dumps(model.to_checkpoint(step=3))))
    assert back.mask_type == "real" and back.padded_bins == 36 and back.stft_params == SMALL
    np.testing.assert_array_equal(back.separate(stems.mixture).samples, before)


def test_checkpoint_shape_mismatch_is_format_error():
    ck = small_model().to_checkpoint()
    ck.config["unet.channels"] = "3,5"
    with pytest.raises(FormatError):
        SourceModel.from_checkpoint(ck)
    del ck.config["mask"]
    with pytest.raises(FormatError):
        SourceModel.from_checkpoint(ck)


def test_trainer_reduces_loss_and_is_deterministic():
    stems = synth_stems(5, 0.2)
    histories, weights = [], []
    for _ in range(2):
        model = small_model(dtype="float32", seed=1)
        tr = Trainer(model, [stems], TrainConfig(loss="sdr+mag", steps=15, lr=3e-3, patch_frames=32,
                                                 augment=2, seed=1))
        histories.append(tr.run())
        weights.append(dumps(model.to_checkpoint(tr.step_count)))
    assert histories[0] == histories[1]
    assert weights[0] == weights[1]
    assert np.mean(histories[0][-3:]) < np.mean(histories[0][:3])
