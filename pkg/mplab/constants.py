MATRIX_MAGIC = b"MPLM"
CHECKPOINT_MAGIC = b"MPLC"
CHECKPOINT_VERSION = 1

VERBOSITY_ENV = "MPLAB_VERBOSITY"
LOCK_FILENAME = ".mplab.lock"

# Sentence delimiters used by the n-gram model and its ARPA files.
BOS = "<s>"
EOS = "</s>"

SETTINGS = ("in_domain_small", "in_domain_large", "out_domain")

# Buffer entries are carried in ParameterSets but never receive gradients.
BUFFER_SUFFIXES = ("running_mean", "running_var")

SPLITS = ("labeled", "unlabeled", "dev", "test")
