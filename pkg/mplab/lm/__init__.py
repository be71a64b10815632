from mplab.lm.arpa import dumps_arpa, load_arpa, loads_arpa, save_arpa  # noqa: F401
from mplab.lm.ngram import NgramModel, perplexity, train_ngram, uniform_model  # noqa: F401
