"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``SEQLAB_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

if os.environ.get("SEQLAB_PURE_PYTHON", "").strip() not in ("", "0"):
    from seqlab import _fallback as impl
else:
    try:
        from seqlab import _kernels as impl
    except ImportError:  # extension not built
        from seqlab import _fallback as impl

BACKEND = impl.BACKEND
bb_induction = impl.bb_induction
run_experiments = impl.run_experiments
make_source = impl.make_source
