from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from actioncodec.data import EmbodimentRegistry, EmbodimentSpec
from actioncodec.model import (
    PerceiverConfig,
    PerceiverDecoder,
    PerceiverEncoder,
    SoftPromptTable,
    fourier_time_embed,
)


@pytest.fixture(scope="module")
def registry():
    return EmbodimentRegistry(
        [
            EmbodimentSpec("arm7", 0, control_hz=20.0, action_dim=7),
            EmbodimentSpec("arm5", 1, control_hz=10.0, action_dim=5),
        ]
    )


def small_config(variant="independent", **kw):
    defaults = dict(
        latent_dim=32, n_tokens=4, n_layers=1, n_heads=2,
        variant=variant, ff_multiplier=2, prompt_dim=8, fourier_freqs=8,
    )
    defaults.update(kw)
    return PerceiverConfig(**defaults)


class TestFourierTimeEmbed:
    def test_zero_time(self):
        out = fourier_time_embed(torch.zeros(3), dim=8)
        np.testing.assert_allclose(out[:, :4], 0.0, atol=1e-12)
        np.testing.assert_allclose(out[:, 4:], 1.0, atol=1e-12)

    def test_identical_timestamps_identical_rows(self):
        out = fourier_time_embed(torch.tensor([0.5, 0.5, 0.1]), dim=16)
        np.testing.assert_array_equal(out[0].numpy(), out[1].numpy())

    def test_analytic_values(self):
        # dim=4, frequencies {1, 10}, t=0.25: [sin(pi/2), sin(5pi), cos(pi/2), cos(5pi)]
        out = fourier_time_embed(
            torch.tensor([0.25], dtype=torch.float64), dim=4, f_min=1.0, f_max=10.0
        )
        expected = [
            math.sin(math.pi / 2), math.sin(5 * math.pi),
            math.cos(math.pi / 2), math.cos(5 * math.pi),
        ]
        np.testing.assert_allclose(out[0].numpy(), expected, atol=1e-12)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError, match="even"):
            fourier_time_embed(torch.zeros(2), dim=5)


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            PerceiverConfig(latent_dim=30, n_heads=4)

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            PerceiverConfig(variant="bidirectional")


def _encode(encoder, registry, actions, emb_name="arm7"):
    spec = registry.by_name(emb_name)
    T = actions.shape[1]
    ts = torch.arange(T, dtype=actions.dtype) / spec.control_hz
    return encoder(actions, ts, spec)


class TestEncoder:
    def test_output_shape(self, registry):
        cfg = small_config()
        torch.manual_seed(0)
        enc = PerceiverEncoder(cfg, registry)
        out = _encode(enc, registry, torch.randn(3, 20, 7))
        assert out.shape == (3, 4, 32)

    def test_deterministic_forward(self, registry):
        cfg = small_config()
        torch.manual_seed(0)
        enc = PerceiverEncoder(cfg, registry)
        x = torch.randn(2, 20, 7)
        a = _encode(enc, registry, x)
        b = _encode(enc, registry, x)
        assert torch.equal(a, b)

    def test_prompt_sensitivity(self, registry):
        # identical actions, different embodiment rows -> different latents
        cfg = small_config()
        torch.manual_seed(0)
        enc = PerceiverEncoder(cfg, registry)
        spec5 = registry.by_name("arm5")
        x = torch.randn(1, 10, 5)
        ts = torch.arange(10, dtype=torch.float32) / spec5.control_hz
        base = enc(x, ts, spec5)
        with torch.no_grad():
            enc.prompts.embeddings[1] += 1.0
        shifted = enc(x, ts, spec5)
        assert not torch.allclose(base, shifted)

    def test_unregistered_embodiment(self, registry):
        cfg = small_config()
        enc = PerceiverEncoder(cfg, registry)
        ghost = EmbodimentSpec("ghost", 5, 20.0, 7)
        with pytest.raises(KeyError, match="unregistered"):
            enc(torch.randn(1, 20, 7), torch.arange(20) / 20.0, ghost)

    def test_independent_variant_rows_isolated(self, registry):
        """Perturbing query slot j must leave every other output row unchanged."""
        cfg = small_config("independent")
        torch.manual_seed(1)
        enc = PerceiverEncoder(cfg, registry)
        x = torch.randn(2, 20, 7)
        base = _encode(enc, registry, x).detach()
        for j in range(cfg.n_tokens):
            with torch.no_grad():
                saved = enc.queries[j].clone()
                enc.queries[j] += torch.randn(cfg.latent_dim)
            out = _encode(enc, registry, x).detach()
            with torch.no_grad():
                enc.queries[j].copy_(saved)
            others = [k for k in range(cfg.n_tokens) if k != j]
            assert torch.equal(out[:, others], base[:, others])
            assert not torch.allclose(out[:, j], base[:, j])

    def test_independent_jacobian_zero_across_slots(self, registry):
        """Finite-difference Jacobian of row k w.r.t. query j is 0 for j != k."""
        cfg = small_config("independent")
        torch.manual_seed(2)
        enc = PerceiverEncoder(cfg, registry).double()
        x = torch.randn(1, 20, 7, dtype=torch.float64)
        eps = 1e-6
        for j in [0, 2]:
            for coord in [0, 5]:
                with torch.no_grad():
                    enc.queries[j, coord] += eps
                    plus = _encode(enc, registry, x).detach().clone()
                    enc.queries[j, coord] -= 2 * eps
                    minus = _encode(enc, registry, x).detach().clone()
                    enc.queries[j, coord] += eps
                jac = (plus - minus) / (2 * eps)
                for k in range(cfg.n_tokens):
                    if k != j:
                        assert torch.allclose(
                            jac[:, k], torch.zeros_like(jac[:, k]), atol=1e-5
                        )

    def test_causal_variant_respects_mask(self, registry):
        """Perturbing query slot j only moves output rows >= j."""
        cfg = small_config("causal")
        torch.manual_seed(3)
        enc = PerceiverEncoder(cfg, registry).double()
        x = torch.randn(1, 20, 7, dtype=torch.float64)
        base = _encode(enc, registry, x).detach()
        for j in range(cfg.n_tokens):
            with torch.no_grad():
                saved = enc.queries[j].clone()
                enc.queries[j] += torch.randn(cfg.latent_dim, dtype=torch.float64)
            out = _encode(enc, registry, x).detach()
            with torch.no_grad():
                enc.queries[j].copy_(saved)
            before = list(range(j))
            assert torch.equal(out[:, before], base[:, before])
            assert not torch.allclose(out[:, j], base[:, j])

    def test_sa_variant_mixes_all_slots(self, registry):
        cfg = small_config("sa")
        torch.manual_seed(4)
        enc = PerceiverEncoder(cfg, registry)
        x = torch.randn(1, 20, 7)
        base = _encode(enc, registry, x).detach()
        with torch.no_grad():
            enc.queries[3] += torch.randn(cfg.latent_dim)
        out = _encode(enc, registry, x).detach()
        assert not torch.allclose(out[:, 0], base[:, 0])


class TestDecoder:
    def test_shape_follows_target_embodiment(self, registry):
        cfg = small_config()
        torch.manual_seed(0)
        dec = PerceiverDecoder(cfg, registry)
        tokens = torch.randn(2, 4, 32)
        out7 = dec(tokens, registry.by_name("arm7"))
        out5 = dec(tokens, registry.by_name("arm5"))
        assert out7.shape == (2, 20, 7)
        assert out5.shape == (2, 10, 5)

    def test_outputs_bounded_by_tanh(self, registry):
        cfg = small_config()
        torch.manual_seed(0)
        dec = PerceiverDecoder(cfg, registry)
        out = dec(10 * torch.randn(4, 4, 32), registry.by_name("arm7"))
        assert torch.all(out <= 1.0) and torch.all(out >= -1.0)
        assert torch.all(torch.isfinite(out))

    def test_deterministic(self, registry):
        cfg = small_config()
        torch.manual_seed(0)
        dec = PerceiverDecoder(cfg, registry)
        tokens = torch.randn(1, 4, 32)
        a = dec(tokens, registry.by_name("arm7"))
        b = dec(tokens, registry.by_name("arm7"))
        assert torch.equal(a, b)


class TestGradients:
    def test_encode_decode_gradients_match_finite_differences(self, registry):
        """Analytic gradients of a scalar of decode(encode(A)) vs central FD."""
        cfg = small_config()
        torch.manual_seed(5)
        enc = PerceiverEncoder(cfg, registry).double()
        dec = PerceiverDecoder(cfg, registry).double()
        spec = registry.by_name("arm7")
        x = torch.randn(1, 20, 7, dtype=torch.float64)
        ts = torch.arange(20, dtype=torch.float64) / spec.control_hz

        def objective() -> torch.Tensor:
            return dec(enc(x, ts, spec), spec).pow(2).sum()

        loss = objective()
        params = [p for p in list(enc.parameters()) + list(dec.parameters())]
        grads = torch.autograd.grad(loss, params, allow_unused=True)

        rng = np.random.default_rng(0)
        checked = 0
        flat = [(p, g) for p, g in zip(params, grads) if g is not None]
        while checked < 10:
            pi = int(rng.integers(len(flat)))
            p, g = flat[pi]
            idx = tuple(int(rng.integers(s)) for s in p.shape)
            eps = 1e-6
            with torch.no_grad():
                p[idx] += eps
                plus = float(objective())
                p[idx] -= 2 * eps
                minus = float(objective())
                p[idx] += eps
            fd = (plus - minus) / (2 * eps)
            analytic = float(g[idx])
            scale = max(abs(fd), abs(analytic), 1e-8)
            assert abs(fd - analytic) / scale < 1e-4, (pi, idx, fd, analytic)
            checked += 1


class TestSoftPromptTable:
    def test_lookup_and_bounds(self):
        table = SoftPromptTable(3, 8)
        assert table(2).shape == (8,)
        with pytest.raises(KeyError):
            table(3)
