"""Bit-flip perturbation, channel error models, and BER composition algebra.

Flips applied by the privacy mechanism and flips caused by the physical
channel are the same operation, so their rates compose: two independent
flip stages with rates ``p_a`` and ``p_c`` behave like a single stage with
rate ``p_a + p_c - 2 p_a p_c`` (a double flip restores the bit).  Inverting
that relation gives the artificial rate the transmitter must add on top of
a known channel rate to hit an end-to-end target.

All randomness flows through :class:`RngHandle`, a counter-based stream id
``(seed, round, client, stage)``: the same handle always yields the same
bits, so runs replay exactly regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import erfc

from .binfloat import FRACTION_BITS, fp_to_fx, recover_from_fractions
from .validation import check_bitstream, check_model, check_positive, check_probability

__all__ = [
    "ChannelNoiseExceedsBudget",
    "RngHandle",
    "ChannelConfig",
    "STAGE_CHANNEL_DRAW",
    "STAGE_ARTIFICIAL_FLIP",
    "STAGE_CHANNEL_FLIP",
    "STAGE_GAUSSIAN_NOISE",
    "STAGE_PACKET_DROP",
    "STAGE_KAPPA_DRAW",
    "STAGE_MODEL_INIT",
    "flip_bits",
    "flip_fractions",
    "flip_float32_words",
    "perturb_model",
    "awgn_ber",
    "compose_ber",
    "artificial_ber",
    "plaintext_ber_stream",
    "ciphertext_ber_block",
    "plaintext_ber_block",
]

# Stage ids for RngHandle streams.  Stages separate the independent noise
# sources inside one (round, client) cell.
STAGE_CHANNEL_DRAW = 0  # per-round channel BER draw
STAGE_ARTIFICIAL_FLIP = 1  # transmitter-side privacy flips
STAGE_CHANNEL_FLIP = 2  # channel-induced flips
STAGE_GAUSSIAN_NOISE = 3  # additive Gaussian mechanism noise
STAGE_PACKET_DROP = 4  # per-packet erasure draws
STAGE_KAPPA_DRAW = 5  # sensitivity-sphere perturbation draws
STAGE_MODEL_INIT = 6  # model initialization


class ChannelNoiseExceedsBudget(ValueError):
    """Channel BER already exceeds the end-to-end flip target.

    Privacy is over-satisfied: no artificial flips are needed, but the extra
    channel noise puts convergence at risk.  Callers may catch this and
    proceed with an artificial rate of zero.
    """


@dataclass(frozen=True)
class RngHandle:
    """Deterministic random-stream id ``(seed, round, client, stage)``.

    ``generator()`` returns a fresh generator seeded only by the stream id,
    so the same handle always produces the same sequence — experiments
    replay bit-exactly whether clients run serially or in parallel.
    """

    seed: int
    round: int = 0
    client: int = 0
    stage: int = 0

    def __post_init__(self):
        for name in ("seed", "round", "client", "stage"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    def substream(self, *, round: Optional[int] = None, client: Optional[int] = None,
                  stage: Optional[int] = None) -> "RngHandle":
        """Derive a handle with some stream-id components replaced."""
        kwargs = {}
        if round is not None:
            kwargs["round"] = round
        if client is not None:
            kwargs["client"] = client
        if stage is not None:
            kwargs["stage"] = stage
        return replace(self, **kwargs)

    def generator(self) -> np.random.Generator:
        """Fresh generator for this stream id (same id, same bits)."""
        ss = np.random.SeedSequence(
            entropy=int(self.seed),
            spawn_key=(int(self.round), int(self.client), int(self.stage)),
        )
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class ChannelConfig:
    """Physical-channel description used to derive a bit-error rate.

    ``modulation`` is one of ``"bpsk"``, ``"qpsk"`` (identical BER over an
    AWGN channel at the same per-bit SNR), or ``"fixed"`` (use ``fixed_ber``
    verbatim).  ``snr`` is the linear per-bit SNR.
    """

    snr: float = 1.0
    modulation: str = "bpsk"
    fixed_ber: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.modulation not in ("bpsk", "qpsk", "fixed"):
            raise ValueError(
                f"modulation must be 'bpsk', 'qpsk' or 'fixed', got {self.modulation!r}"
            )
        if self.modulation == "fixed":
            if self.fixed_ber is None:
                raise ValueError("fixed modulation requires fixed_ber")
            check_probability(self.fixed_ber, "fixed_ber")
        else:
            check_positive(self.snr, "snr")


def _generator_from(rng) -> np.random.Generator:
    if isinstance(rng, RngHandle):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"rng must be an RngHandle or numpy Generator, got {type(rng)!r}")


def flip_bits(bits, p: float, rng) -> np.ndarray:
    """Flip each bit independently with probability ``p``.

    With an :class:`RngHandle` this is a pure function of (bits, p, stream
    id).  Flipping twice with rates ``p_a`` then ``p_c`` (independent
    streams) is distributed as one pass at ``compose_ber(p_a, p_c)``.
    """
    arr = check_bitstream(bits)
    p = check_probability(p, "p", high=1.0)
    gen = _generator_from(rng)
    mask = gen.random(arr.size) < p
    return arr ^ mask.astype(np.uint8)


def flip_fractions(fractions, p: float, rng) -> np.ndarray:
    """Flip the 23 fraction bits of each element independently at rate ``p``.

    Equivalent to ``fractions_from_bits(flip_bits(encode(fx), p, rng))`` —
    draws are consumed in the same parameter-major, LSB-first order, so the
    result is bit-identical to the bitstream path for the same stream id.
    """
    fr = np.asarray(fractions, dtype=np.uint32)
    p = check_probability(p, "p", high=1.0)
    gen = _generator_from(rng)
    flips = gen.random((fr.size, FRACTION_BITS)) < p
    mask = (flips.astype(np.uint32) << np.arange(FRACTION_BITS, dtype=np.uint32)).sum(
        axis=1, dtype=np.uint32
    )
    return fr ^ mask.reshape(fr.shape)


def flip_float32_words(model, p: float, rng) -> np.ndarray:
    """Flip all 32 bits of each binary32 word independently at rate ``p``.

    Models a conventional transport that accepts corrupted words instead of
    retransmitting: sign and exponent bits are exposed, so the output may
    contain huge, subnormal or non-finite values.  No exception is raised.
    """
    arr = np.asarray(model, dtype=np.float32)
    p = check_probability(p, "p", high=1.0)
    gen = _generator_from(rng)
    flips = gen.random((arr.size, 32)) < p
    mask = (flips.astype(np.uint64) << np.arange(32, dtype=np.uint64)).sum(
        axis=1, dtype=np.uint64
    ).astype(np.uint32)
    words = arr.reshape(-1).view(np.uint32) ^ mask
    return words.view(np.float32).reshape(arr.shape).copy()


def perturb_model(model, p_artificial: float, p_channel: float, nu_inf, handle: RngHandle
                  ) -> np.ndarray:
    """Encode, flip fraction bits in two stages, and decode a model vector.

    Stages use the handle's ``(round, client)`` with
    ``STAGE_ARTIFICIAL_FLIP`` and ``STAGE_CHANNEL_FLIP`` respectively.  With
    both rates zero this is the plain quantization round trip.
    """
    arr = check_model(model)
    fx = fp_to_fx(arr, nu_inf)
    fr = fx.fractions
    if p_artificial > 0:
        fr = flip_fractions(fr, p_artificial, handle.substream(stage=STAGE_ARTIFICIAL_FLIP))
    if p_channel > 0:
        fr = flip_fractions(fr, p_channel, handle.substream(stage=STAGE_CHANNEL_FLIP))
    return recover_from_fractions(fr, fx.shared_exponent)


def awgn_ber(config: ChannelConfig) -> float:
    """Bit-error rate of the configured channel.

    BPSK/QPSK over AWGN: ``Q(sqrt(2 * snr))`` with the Gaussian tail
    ``Q(x) = erfc(x / sqrt(2)) / 2``.  Fixed mode returns ``fixed_ber``.
    """
    if config.modulation == "fixed":
        return float(config.fixed_ber)
    ber = 0.5 * erfc(np.sqrt(config.snr))
    return float(ber)


def compose_ber(p_a: float, p_c: float) -> float:
    """End-to-end flip rate of two independent flip stages.

    ``p = p_a + p_c - 2 p_a p_c``: a bit ends up flipped when exactly one
    stage flips it.  Never exceeds 1/2 for inputs in [0, 1/2].
    """
    p_a = check_probability(p_a, "p_a", inclusive_high=True)
    p_c = check_probability(p_c, "p_c", inclusive_high=True)
    return p_a + p_c - 2.0 * p_a * p_c


def artificial_ber(p_target: float, p_channel: float) -> float:
    """Artificial flip rate needed on top of the channel to hit ``p_target``.

    Inverts :func:`compose_ber`: ``(p_target - p_channel) / (1 - 2 p_channel)``.
    Raises :class:`ChannelNoiseExceedsBudget` when the channel alone already
    flips more than the target.
    """
    p_target = check_probability(p_target, "p_target")
    p_channel = check_probability(p_channel, "p_channel")
    if p_channel > p_target:
        raise ChannelNoiseExceedsBudget(
            f"channel BER {p_channel} exceeds end-to-end target {p_target}; "
            "privacy is over-satisfied without artificial flips"
        )
    return (p_target - p_channel) / (1.0 - 2.0 * p_channel)


def plaintext_ber_stream(p_target: float) -> float:
    """Ciphertext flip rate for a stream cipher, given a plaintext target.

    Stream ciphers XOR a keystream bit-by-bit, which commutes with bit
    flips, so the rate passes through unchanged.
    """
    return check_probability(p_target, "p_target")


def ciphertext_ber_block(p_target: float, block_bits: int) -> float:
    """Ciphertext flip rate for a block cipher, given a plaintext target.

    One ciphertext bit error scrambles its whole decrypted block, flipping
    each plaintext bit with probability 1/2.  Solving
    ``(1 - (1 - p_ct)**block_bits) / 2 = p_target`` gives
    ``p_ct = 1 - (1 - 2 p_target)**(1 / block_bits)``.
    """
    p_target = check_probability(p_target, "p_target")
    block_bits = check_positive(block_bits, "block_bits", integer=True)
    return 1.0 - (1.0 - 2.0 * p_target) ** (1.0 / block_bits)


def plaintext_ber_block(p_ciphertext: float, block_bits: int) -> float:
    """Plaintext flip rate produced by a ciphertext rate under a block cipher.

    Forward map ``(1 - (1 - p_ct)**block_bits) / 2``; inverse of
    :func:`ciphertext_ber_block`.
    """
    p_ciphertext = check_probability(p_ciphertext, "p_ciphertext", high=1.0,
                                     inclusive_high=True)
    block_bits = check_positive(block_bits, "block_bits", integer=True)
    return 0.5 * (1.0 - (1.0 - p_ciphertext) ** block_bits)
