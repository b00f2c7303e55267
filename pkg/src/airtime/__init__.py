"""Per-AP WLAN airtime interference estimation.

Closed-form baselines (simple sum, uniform superposition), three neural
estimators (MLP, BiLSTM, multi-kernel GCN) on a small reverse-mode autodiff
engine, a synthetic topology-generalization benchmark, and the experiment
protocols that compare them.
"""

from .baselines import (monte_carlo_superposition, simple_sum, threshold_sweep,
                        uniform_superposition)
from .models import (GcnModel, KernelSet, LstmModel, MlpModel, build_kernels,
                     build_model, pad_inputs)
from .synth import (SynthConfig, augment_node_ids, build_k_topology_experiment,
                    gen_erdos_renyi, gen_loads, label_simple_sum, label_single_failure,
                    make_ablation_benchmark)
from .telemetry import (Dataset, LabeledSample, TelemetrySample, Topology,
                        derive_adjacency, high_load_filter, load_from_telemetry,
                        neighborhood_probability, symmetrize_rssi)
from .training import (MetricsReport, TrainConfig, evaluate, oversample_high_load,
                       train)
from .experiments import (ModelSpec, kernel_ablation, pearson_heatmap, run_k_sweep,
                          transfer_evaluate)

__version__ = "0.1.0"
