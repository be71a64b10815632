__version__ = "0.3.1"

"""
Changelog for version 0.3.1:

## What's Changed
* Exit codes per error category in the CLI entry point
* `mpl --offline-init` to start the offline model from a separate checkpoint
* `experiment lm-sweep` reports dev perplexity next to the pseudo-label WER
"""

__version__ = "0.3.0"

"""
Changelog for version 0.3.0:

## What's Changed
* Group, instance and layer normalization share one implementation; batch norm keeps running statistics as buffers
* Checkpoint averaging over the best validation epochs for seed and MPL models
* Witten-Bell smoothing is now the n-gram default; add-k kept for small corpora
"""

__version__ = "0.2.0"

"""
Changelog for version 0.2.0:

## What's Changed
* Iterative pseudo-labeling with LM-fused prefix beam search
* Workdir lock file so two commands never write the same workdir
"""
