"""Central finite-difference checks for every parameter of a reduced model."""
import numpy as np
import pytest

from emgse.model import NetDims, backward, build_params, forward, l1_loss, l1_loss_grad

TINY = NetDims(aux_in=5, audio_in=6, enc_hidden=7, enc_out=4, fusion_out=8, blstm_hidden=3, out_dim=6)
T = 3
STEP = 1e-5
REL_TOL = 1e-4
MASK_SEED = 12345


def make_problem(variant, seed, train, dropout_p):
    rng = np.random.default_rng(seed)
    dims = TINY if variant == "EMGSE" else NetDims(
        aux_in=6, audio_in=6, enc_hidden=7, enc_out=4, fusion_out=8, blstm_hidden=3, out_dim=6
    )
    params = build_params(variant, "full", dims, rng)
    x_emg = rng.standard_normal((T, dims.aux_in)) if variant == "EMGSE" else None
    x_audio = rng.standard_normal((T, dims.audio_in))

    z0, _, _ = run_forward(params, x_emg, x_audio, train, dropout_p)
    # Keep |pred - target| bounded away from zero so the L1 kink stays on one
    # side under the finite-difference step.
    target = z0 - rng.uniform(0.5, 1.5, size=z0.shape) * np.where(
        rng.random(z0.shape) < 0.5, -1.0, 1.0
    )
    return params, x_emg, x_audio, target


def run_forward(params, x_emg, x_audio, train, dropout_p):
    # A fresh generator with a fixed seed replays identical dropout masks.
    rng = np.random.default_rng(MASK_SEED)
    return forward(params, x_emg, x_audio, train=train, dropout_p=dropout_p, rng=rng)


def loss_of(params, x_emg, x_audio, target, train, dropout_p):
    z, _, _ = run_forward(params, x_emg, x_audio, train, dropout_p)
    return l1_loss(z, target)


def check_all_gradients(variant, train, dropout_p, seed):
    params, x_emg, x_audio, target = make_problem(variant, seed, train, dropout_p)
    z, _, cache = run_forward(params, x_emg, x_audio, train, dropout_p)
    analytic = backward(params, cache, l1_loss_grad(z, target))

    worst = 0.0
    for name, arr in params.named_params():
        flat = arr.reshape(-1)
        g_an = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + STEP
            up = loss_of(params, x_emg, x_audio, target, train, dropout_p)
            flat[idx] = orig - STEP
            down = loss_of(params, x_emg, x_audio, target, train, dropout_p)
            flat[idx] = orig
            g_fd = (up - down) / (2 * STEP)
            # The 1e-6 floor keeps 64-bit finite-difference roundoff (about
            # eps * |loss| / step ~ 1e-11 absolute) from dominating gradients
            # that are themselves far below any trainable scale.
            rel = abs(g_fd - g_an[idx]) / max(1e-6, abs(g_fd) + abs(g_an[idx]))
            worst = max(worst, rel)
            assert rel < REL_TOL, f"{name}[{idx}]: fd={g_fd:.3e} analytic={g_an[idx]:.3e} rel={rel:.3e}"
    return worst


class TestFiniteDifferences:
    def test_multimodal_eval_mode(self):
        check_all_gradients("EMGSE", train=False, dropout_p=0.0, seed=101)

    def test_multimodal_train_mode_with_dropout(self):
        check_all_gradients("EMGSE", train=True, dropout_p=0.5, seed=103)

    def test_audio_only_variant(self):
        check_all_gradients("SE_A", train=False, dropout_p=0.0, seed=105)


class TestDegenerateGradients:
    def test_zero_loss_gives_zero_gradients(self):
        params, x_emg, x_audio, _ = make_problem("EMGSE", 107, False, 0.0)
        z, _, cache = run_forward(params, x_emg, x_audio, False, 0.0)
        grads = backward(params, cache, l1_loss_grad(z, z.copy()))
        for name, _ in params.named_params():
            np.testing.assert_array_equal(grads[name], 0.0, err_msg=name)

    def test_masked_out_unit_has_zero_input_weight_gradient(self):
        params, x_emg, x_audio, target = make_problem("EMGSE", 109, True, 0.5)
        z, _, cache = run_forward(params, x_emg, x_audio, True, 0.5)
        grads = backward(params, cache, l1_loss_grad(z, target))
        # Columns of the first mask that are dropped at every step carry no
        # gradient into that unit's input weights or bias.
        dead = np.all(cache.aux_mask1 == 0.0, axis=0)
        assert dead.any(), "seed must produce at least one fully masked unit"
        np.testing.assert_array_equal(grads["enc_aux1.w"][:, dead], 0.0)
        np.testing.assert_array_equal(grads["enc_aux1.b"][dead], 0.0)
