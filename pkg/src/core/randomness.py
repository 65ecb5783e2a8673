"""Deterministic, splittable randomness.

Every consumer of randomness receives an ``RngStream``. A stream is the pair
(seed, stream id); its generator is a counter-based Philox keyed through a
``SeedSequence`` whose spawn key is the stream id, so equal pairs replay the
same draws and distinct stream ids are independent. Child streams are derived
by labels (``stream.derive("noise", variant, row_id)``).
"""

import hashlib
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

Label = Union[str, int]

_MASK64 = (1 << 64) - 1


def label_to_id(*labels: Label) -> int:
    """Stable 64-bit id for a tuple of labels."""
    text = "\x1f".join(str(label) for label in labels)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RngStream(BaseModel):
    """A reproducible random stream identified by (seed, stream id)."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, le=_MASK64, description="Top-level 64-bit seed")
    stream_id: int = Field(default=0, ge=0, le=_MASK64, description="64-bit stream identifier")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(sequence))

    def derive(self, *labels: Label) -> "RngStream":
        """Child stream for the given labels; disjoint from the parent."""
        child = label_to_id(self.stream_id, *labels)
        return RngStream(seed=self.seed, stream_id=child)

    def child_seed(self, *labels: Label) -> int:
        """A 64-bit seed derived from this stream, e.g. for a ProjectionSpec."""
        return int(self.derive(*labels).generator().integers(0, _MASK64, dtype=np.uint64, endpoint=True))


def as_generator(rng: Union[RngStream, np.random.Generator, int, None]) -> np.random.Generator:
    """Normalize the accepted randomness arguments to a Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
