"""Random network builders shared across test modules."""

import numpy as np

from grusm.nets import (
    GrusmNetwork,
    TargetModule,
    TransferLinks,
    make_source,
)


def random_target(rng, substrates=None, n_hidden=None, scale=1.0):
    substrates = substrates or [(rng.integers(1, 4), rng.integers(1, 5))
                                for _ in range(rng.integers(1, 4))]
    substrates = [(int(r), int(c)) for r, c in substrates]
    n_in = sum(r * c for r, c in substrates)
    n_hidden = int(n_hidden if n_hidden is not None else rng.integers(1, 6))
    u = lambda *shape: rng.uniform(-scale, scale, shape)
    return TargetModule(
        substrates=substrates,
        hidden_bias=u(n_hidden),
        hidden_self=u(n_hidden),
        out_bias=u(10),
        w_in=u(n_in, n_hidden),
        w_out=u(n_hidden, 10),
    )


def random_network(rng, with_source=None, substrates=None, n_hidden=None):
    """A random network; attaches a random frozen source half the time
    unless ``with_source`` forces it."""
    target = random_target(rng, substrates=substrates, n_hidden=n_hidden)
    if with_source is None:
        with_source = bool(rng.integers(0, 2))
    sources = []
    if with_source:
        src_net = random_target(rng)
        links = TransferLinks(
            in_to_hidden=rng.uniform(-1, 1, (target.n_inputs, src_net.n_hidden)),
            out_to_out=rng.uniform(-1, 1, (src_net.n_outputs, target.n_outputs)),
        )
        sources.append((make_source(src_net, label="test-source"), links))
    return GrusmNetwork(target=target, sources=sources)
