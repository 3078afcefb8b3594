import os

# Pin kernel parallelism before numpy spins up BLAS pools: acceptance runs
# require byte-reproducible reductions.
os.environ.setdefault("SSGAN_THREADS", "1")

from threadpoolctl import threadpool_limits

threadpool_limits(limits=int(os.environ["SSGAN_THREADS"]))
