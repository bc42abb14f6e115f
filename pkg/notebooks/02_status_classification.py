# %% [markdown]
# # Predicting Pass/Fail from pre-stress measurements
#
# Direct classification with the 24-fold device-number split, then the
# two-step variant that first predicts the device group.

# %%
import numpy as np

from radfit.synthgen import SynthManifest, generate_corpus
from radfit.preprocess import preprocess_records
from radfit.workflows import DirectRunConfig, run_direct_classification, run_multistep_classification

records, truths = generate_corpus(SynthManifest())
pf = preprocess_records(records).pipeline

# %%
for kind, hp in (("logistic", None), ("forest", {"n_trees": 100}), ("boosting", None)):
    rep = run_direct_classification(pf, DirectRunConfig(kind, hyperparameters=hp))
    folds = np.array(list(rep.fold_accuracies.values()))
    print(f"{kind:9s} accuracy {rep.overall_accuracy:.3f}  fold spread {folds.min():.2f}-{folds.max():.2f}")

# %% [markdown]
# Per-manufacturer accuracy for boosting; the outcome table is what the
# `radfit plot --kind heatmap` command renders.

# %%
rep = run_direct_classification(pf, DirectRunConfig("boosting"))
for m, acc in sorted(rep.per_manufacturer_accuracy().items()):
    print(m, f"{acc:.2f}")

# %% [markdown]
# Two-step: predict the manufacturer, then classify with a model trained
# only on that manufacturer's devices from the other folds.

# %%
ms = run_multistep_classification(pf, "manufacturer", DirectRunConfig("forest", hyperparameters={"n_trees": 100}))
print(f"step 1 {ms.step1_accuracy:.3f}, overall {ms.overall_accuracy:.3f}")
