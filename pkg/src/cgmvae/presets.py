"""Per-dataset hyperparameter presets (flat config keys, CLI flags still win).

reuters and bookmarks carry one extra 512-unit decoder hidden layer; weight
decay ships as 0 everywhere.
"""

PRESETS = {
    "ebird": {"learning_rate": 0.001, "alpha": 1.0, "beta": 0.5, "embed_dim": 2048,
              "dropout": 0.5, "batch_size": 128},
    "bookmarks": {"learning_rate": 0.002, "alpha": 1.0, "beta": 1.0, "embed_dim": 2048,
                  "dropout": 0.5, "batch_size": 128,
                  "decoder_hidden": [512, 512, 512]},
    "nus-vec": {"learning_rate": 0.004, "alpha": 1.0, "beta": 0.5, "embed_dim": 1024,
                "dropout": 0.5, "batch_size": 256},
    "mirflickr": {"learning_rate": 0.001, "alpha": 2.0, "beta": 0.5, "embed_dim": 2048,
                  "dropout": 0.5, "batch_size": 128},
    "reuters": {"learning_rate": 0.005, "alpha": 2.0, "beta": 1.0, "embed_dim": 2048,
                "dropout": 0.5, "batch_size": 128,
                "decoder_hidden": [512, 512, 512]},
    "scene": {"learning_rate": 0.003, "alpha": 1.0, "beta": 0.5, "embed_dim": 512,
              "dropout": 0.3, "batch_size": 128},
    "sider": {"learning_rate": 0.002, "alpha": 1.0, "beta": 0.5, "embed_dim": 512,
              "dropout": 0.5, "batch_size": 128},
    "yeast": {"learning_rate": 0.002, "alpha": 1.0, "beta": 0.5, "embed_dim": 512,
              "dropout": 0.5, "batch_size": 128},
    "delicious": {"learning_rate": 0.001, "alpha": 1.0, "beta": 0.5, "embed_dim": 2048,
                  "dropout": 0.5, "batch_size": 128},
}
