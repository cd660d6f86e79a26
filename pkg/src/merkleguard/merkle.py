"""Per-node leaf values and the left-deep Merkle fold used to check forwarding.

A node's leaf is ``h(id || secret)``.  A route's root folds the leaves of its
members in route order: ``acc = l0; acc = h(acc || l1); acc = h(acc || l2) ...``
which is the left-deep tree ``h(h(h(a)||h(b))||h(c))`` for three leaves.
"""
from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

Digest = bytes
HashFn = Callable[[bytes], bytes]

DIGEST_SIZE = 20
SECRET_SIZE = 16


def sha1(data: bytes) -> Digest:
    return hashlib.sha1(data).digest()


HASHES: dict[str, HashFn] = {"sha1": sha1}


class EmptyLeafSet(ValueError):
    pass


def encode_node_id(node_id: int) -> bytes:
    """4-byte big-endian encoding of a node identity."""
    return struct.pack(">I", node_id)


def leaf_value(node_id: int, secret: bytes, h: HashFn = sha1) -> Digest:
    return h(encode_node_id(node_id) + bytes(secret))


def fold_root(leaves: Sequence[Digest], h: HashFn = sha1) -> Digest:
    if not leaves:
        raise EmptyLeafSet("empty leaf set")
    acc = leaves[0]
    for leaf in leaves[1:]:
        acc = h(acc + leaf)
    return acc


@dataclass(frozen=True)
class RouteProof:
    """Leaves released by the route, nearest hop first, destination last."""

    leaves: tuple[Digest, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.leaves)


def verify_route_proof(own_leaf: Digest, proof: RouteProof, expected_root: Digest,
                       h: HashFn = sha1) -> bool:
    # an empty proof means nobody downstream attested
    if not proof.leaves:
        return False
    computed = fold_root([own_leaf, *proof.leaves], h)
    return hmac.compare_digest(computed, expected_root)
