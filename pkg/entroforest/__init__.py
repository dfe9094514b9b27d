"""EntroForest core package.

Decision forests whose split selection uses improved estimators of discrete
and differential entropy, together with a bias simulation and experiment
runners. The main user-facing entrypoint is the `entroforest` CLI defined in
`entroforest.cli`.
"""

__all__ = [
    "__version__",
]

__version__ = "0.1.0"
