"""Published hyperparameter tables, transcribed literally.

Presets in :mod:`psrolab.config` are built from these values and a test
checks them field by field, so edit here only to fix a transcription error.
"""

LEDUC = {
    "oracle_agent": "DQN",
    "replay_buffer_size": 10**4,
    "mini_batch_size": 512,
    "optimizer": "Adam",
    "learning_rate": 5e-3,
    "discount_factor": 1.0,
    "epsilon": 0.05,
    "target_update_frequency": 5,
    "policy_network": (256, 256, 256),
    "activation": "ReLU",
    "psro_episodes": 2 * 10**4,
    "psd_episodes": 2 * 10**4,
    "diversity_weight": 1.0,
    "meta_solver": "Nash",
    "conflux_start": 10,
    "conflux_interval": 2,
    "num_subs": 3,
    "num_inferences": 3,
    "pool_size": 5,
}

GOOFSPIEL5 = {
    "oracle_agent": "DQN",
    "replay_buffer_size": 10**4,
    "mini_batch_size": 512,
    "optimizer": "Adam",
    "learning_rate": 5e-3,
    "discount_factor": 1.0,
    "epsilon": 0.05,
    "target_update_frequency": 5,
    "policy_network": (512, 512, 512),
    "activation": "ReLU",
    "psro_episodes": 3 * 10**4,
    "psd_episodes": 3 * 10**4,
    "diversity_weight": 1.0,
    "meta_solver": "Nash",
    "conflux_start": 20,
    "conflux_interval": 3,
    "num_subs": 5,
    "num_inferences": 3,
    "pool_size": 8,
}

LIARS_DICE = {
    "oracle_agent": "Rainbow-DQN",
    "replay_buffer_size": 10**5,
    "mini_batch_size": 512,
    "optimizer": "Adam",
    "learning_rate": 5e-4,
    "learning_rate_decay": "linear",
    "discount_factor": 0.99,
    "epsilon": 0.05,
    "target_update_frequency": 5,
    "soft_update_ratio": 0.005,
    "per_alpha": 0.6,
    "importance_sampling": 0.4,
    "gradient_clip": 10.0,
    "policy_network": (256, 256, 128),
    "activation": "ReLU",
    "psro_episodes": 2 * 10**5,
    "psd_episodes": 2 * 10**5,
    "diversity_weight": 1.0,
    "meta_solver": "Nash",
    "conflux_start": 10,
    "conflux_interval": 2,
    "num_subs": 3,
    "num_inferences": 3,
    "pool_size": 5,
}

# larger per-iteration episode budgets for the long-running profiles
CAPTION_EPISODES = {"leduc": 2 * 10**5, "goofspiel5": 3 * 10**5}
