"""Learning stabilizable dynamics with contraction-metric certificates.

Submodules:
    core        shared types, seeded streams, persistence
    pvtol       ground-truth planar-quadrotor plant and RK4 simulation
    demos       minimum-snap splines, PD demonstrator, dataset generation
    features    random Fourier feature maps with analytic derivatives
    models      learned dynamics / dual-metric evaluation
    constraints contraction LMI assembly and the exchange-set update
    conic       interior-point solver for LMI-constrained convex QPs
    trainer     ridge baselines and the alternating certified fit
    trajopt     Chebyshev pseudospectral minimum-energy trajectory optimization
    tracking    TV-LQR and geodesic feedback controllers
    harness     benchmark runner, metrics, reports
    cli         command-line entry point
"""

__version__ = "0.1.0"
