import os
from box import Box
from dotenv import load_dotenv

# Optional .env next to the working directory; real environment variables win.
load_dotenv()

settings = Box(
    {
        # Horizon used when --steps is not given
        "default_steps": int(os.getenv("OBSERVE_DEFAULT_STEPS", 16)),
        "boundary_samples": int(os.getenv("OBSERVE_BOUNDARY_SAMPLES", 256)),

        # Numerical tolerances
        "duality_tol": float(os.getenv("OBSERVE_DUALITY_TOL", 1e-9)),
        "containment_tol": float(os.getenv("OBSERVE_CONTAINMENT_TOL", 1e-10)),
        "membership_tol": float(os.getenv("OBSERVE_MEMBERSHIP_TOL", 1e-10)),
        "unit_tol": float(os.getenv("OBSERVE_UNIT_TOL", 1e-9)),
        "eigen_gap": float(os.getenv("OBSERVE_EIGEN_GAP", 1e-8)),
        "stability_margin": float(os.getenv("OBSERVE_STABILITY_MARGIN", 1e-9)),

        # Stein solver: dense Kronecker solve up to this order, doubling above
        "kronecker_max_n": int(os.getenv("OBSERVE_KRONECKER_MAX_N", 30)),
        "doubling_max_iter": int(os.getenv("OBSERVE_DOUBLING_MAX_ITER", 64)),

        "bench_workers": int(os.getenv("OBSERVE_BENCH_WORKERS", 4)),
        "log_level": os.getenv("OBSERVE_LOG_LEVEL", "INFO"),
        "schema_version": os.getenv("OBSERVE_SCHEMA_VERSION", "1.0"),
    },
    frozen_box=True,
)
