"""docforge: data machinery for document-conversion corpora.

Modules:
  docmodel    unified annotation format and corpus records
  textfilter  token-multiset precision/recall/F1 plain-text filter
  tablecheck  HTML table grid reconstruction, validity, canonical form
  mathcheck   LaTeX formula syntax validation
  synthgen    synthetic page generation (prompts, endpoints, layout, render)
  pipeline    filter cascade, iteration stats, balancing, dataset versions
  evalkit     normalized edit distance evaluation
"""

__version__ = "0.1.0"
