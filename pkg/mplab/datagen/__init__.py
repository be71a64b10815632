from mplab.datagen.domain import (  # noqa: F401
    DomainSpec,
    base_domain,
    render_features,
    rotation_matrix,
    sample_sentence,
    shifted_domain,
    stationary_token_distribution,
    symmetric_kl,
)
from mplab.datagen.settings import (  # noqa: F401
    Manifest,
    SplitDataset,
    external_text,
    from_manifest,
    load_dataset,
    load_labeled,
    load_manifest,
    make_setting,
    make_vocabulary,
    save_dataset,
    sizes_for,
)
