"""Median DTW error over a slice of the corpus as receiver noise grows.

Uses every twelfth instance (18 walks) so it finishes in under a minute.
"""
import numpy as np

from wivelo.dataset import evaluate, instances
from wivelo.evaluation import summarize

subset = instances()[::12]
for sigma in (0.0, 0.02, 0.05, 0.1):
    results = [evaluate(inst, noise_sigma=sigma) for inst in subset]
    report = summarize([r.error for r in results], groups=[r.instance.scene.name for r in results])
    failed = sum(r.failed for r in results)
    print(f"sigma={sigma:<5} median {report.median:.3f} m  p90 {report.p90:.3f} m  failures {failed}")
    for name, group in sorted(report.groups.items()):
        print(f"    {name:<10} median {group['median']:.3f} m over {group['count']}")
