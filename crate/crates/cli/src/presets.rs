//! Named experiment bundles. Each preset is one or more TOML documents in
//! the same schema accepted by `skilldyn run <config.toml>`.

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    /// `(subdirectory, toml)`; a single unnamed part writes into the run
    /// directory itself.
    pub parts: &'static [(&'static str, &'static str)],
}

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "fig2_domino_ratio",
        about: "two-task learning-time ratio t2/t1 against p1/p2, SignGD and SGD",
        parts: &[(
            "",
            r#"
experiment = "two_task"

[geometry]
n_dim = 1000
batch_size = 128
threshold = 0.01
max_steps = 200000

[sweep]
p1 = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95]
optimizers = [
  { algo = "signgd", lr = 3e-4 },
  { algo = "sgd", lr = 0.1 },
]
"#,
        )],
    },
    Preset {
        name: "fig3_sequential",
        about: "five power-law tasks (alpha 4) learned one after another under SignGD",
        parts: &[(
            "",
            r#"
experiment = "geometry"
record_every = 1

[optimizer]
algo = "signgd"
lr = 3e-4

[geometry]
n_task = 5
n_dim = 1000
alpha = 4.0
n_steps = 3000
"#,
        )],
    },
    Preset {
        name: "fig4_nalign",
        about: "aligned-coordinate counts n_align for two tasks under SignGD",
        parts: &[(
            "",
            r#"
experiment = "geometry"
record_every = 10

[optimizer]
algo = "signgd"
lr = 3e-4

[geometry]
n_task = 2
n_dim = 1000
alpha = 2.0
n_steps = 3000
align = true
"#,
        )],
    },
    Preset {
        name: "fig5_resource_n0",
        about: "Resource-model skill curves for several N0",
        parts: &[(
            "",
            r#"
experiment = "resource"

[resource]
n_task = 5
alpha = 2.0
t_end = 200.0
n_points = 2001

[sweep]
n0 = [0.0, 0.01, 0.1, 1.0, 10.0]
"#,
        )],
    },
    Preset {
        name: "fig6_n0_response",
        about: "fitted N0 against learning rate, gradient noise and batch size",
        parts: &[(
            "",
            r#"
experiment = "n0_response"
record_every = 5

[optimizer]
algo = "signgd"
lr = 3e-4

[geometry]
n_task = 10
n_dim = 1000
alpha = 2.0
n_steps = 3000
batch_size = 128

[resource]
calib_window = [0.0, 1.0]

[sweep]
lr = [1e-4, 3e-4, 1e-3, 3e-3]
noise_sigma = [0.0, 0.1, 0.3, 1.0]
batch_size = [32, 128, 512, 0]
"#,
        )],
    },
    Preset {
        name: "fig7_scaling",
        about: "loss against dimension and against steps with fitted exponents",
        parts: &[
            (
                "dims",
                r#"
experiment = "dim_sweep"
seeds = [0, 1, 2, 3, 4]
record_every = 10

[optimizer]
algo = "signgd"
lr = 0.01

[geometry]
n_task = 1000
alpha = 1.0
n_steps = 100000
plateau_records = 20
plateau_rtol = 1e-6

[fit]
lo = 0.0
hi = 250.0
tail_fraction = 0.1

[sweep]
n_dim = [16, 32, 64, 128, 250]
"#,
            ),
            (
                "steps",
                r#"
experiment = "step_scaling"
record_every = 10

[optimizer]
algo = "signgd"
lr = 1e-4

[geometry]
n_task = 1000
n_dim = 250
n_steps = 10000

[fit]
lo = 1000.0
hi = 10000.0

[sweep]
alpha = [2.0, 3.0, 4.0]
"#,
            ),
        ],
    },
    Preset {
        name: "fig8_parity_scaling",
        about: "multitask sparse parity: final loss against parameters for two Adam beta pairs",
        parts: &[(
            "",
            r#"
experiment = "parity_scaling"
seeds = [0]
"#,
        )],
    },
    Preset {
        name: "fig9_quadratic",
        about: "hierarchical quadratic loss, aligned and Hadamard-rotated",
        parts: &[
            (
                "rotated",
                r#"
experiment = "quadratic"

[quadratic]
rotated = true
n_steps = 5000

[sweep]
optimizers = [
  { algo = "sgd", lr = 0.05 },
  { algo = "signgd", lr = 1e-3 },
  { algo = "adam", lr = 1e-3 },
]
"#,
            ),
            (
                "aligned",
                r#"
experiment = "quadratic"

[quadratic]
rotated = false
n_steps = 5000

[sweep]
optimizers = [
  { algo = "sgd", lr = 0.05 },
  { algo = "signgd", lr = 1e-3 },
  { algo = "adam", lr = 1e-3 },
]
"#,
            ),
        ],
    },
    Preset {
        name: "fig10_optimizers",
        about: "Geometry-model skill curves under SignGD, Adam, AdEMAMix and Lion",
        parts: &[(
            "",
            r#"
experiment = "geometry"

[geometry]
n_task = 10
n_dim = 1000
alpha = 2.0
n_steps = 3000

[sweep]
optimizers = [
  { algo = "signgd", lr = 3e-4 },
  { algo = "adam", lr = 3e-4 },
  { algo = "ademamix", lr = 3e-4 },
  { algo = "lion", lr = 3e-4 },
]
"#,
        )],
    },
    Preset {
        name: "fig13_compositional",
        about: "compositional parity y3 = y1 xor y2 against an unrelated third task",
        parts: &[(
            "",
            r#"
experiment = "compositional"
seeds = [0, 1, 2, 3, 4]
"#,
        )],
    },
    Preset {
        name: "fig14_gates",
        about: "dependency-gated Resource model: AND chain and OR-topped hierarchy",
        parts: &[
            (
                "and_chain",
                r#"
experiment = "resource"

[resource]
p = [0.1, 0.3, 0.6]
n0 = 0.01
t_end = 80.0
dt_max = 0.01
n_points = 8001

[[resource.gates]]
task = 1
kind = "and"
parents = [0]
gamma = 30.0

[[resource.gates]]
task = 2
kind = "and"
parents = [1]
gamma = 30.0
"#,
            ),
            (
                "hierarchy",
                r#"
experiment = "resource"

[resource]
p = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
n0 = 0.01
t_end = 200.0
dt_max = 0.01
n_points = 20001

[[resource.gates]]
task = 3
kind = "and"
parents = [0, 1]
gamma = 30.0

[[resource.gates]]
task = 4
kind = "and"
parents = [1, 2]
gamma = 30.0

[[resource.gates]]
task = 5
kind = "or"
parents = [3, 4]
gamma = 30.0

[[resource.gates]]
task = 6
kind = "or"
parents = [4, 5]
gamma = 30.0
"#,
            ),
        ],
    },
    Preset {
        name: "fig15_modular_geometry",
        about: "one-hot (modular) against random task vectors for 1000 tasks",
        parts: &[(
            "",
            r#"
experiment = "geometry"
record_every = 100

[optimizer]
algo = "signgd"
lr = 0.01

[geometry]
n_task = 1000
n_dim = 1000
alpha = 1.0
n_steps = 10000

[sweep]
mode = ["onehot", "random"]
"#,
        )],
    },
    Preset {
        name: "fig16_modularity",
        about: "success times of x^2 and y^2 for shared and split networks",
        parts: &[(
            "",
            r#"
experiment = "modularity"
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23]
"#,
        )],
    },
    Preset {
        name: "fig17_collapse",
        about: "u^(1/p) learning curves for Geometry and a calibrated Resource model",
        parts: &[(
            "",
            r#"
experiment = "collapse"
record_every = 10

[optimizer]
algo = "signgd"
lr = 3e-4

[geometry]
n_task = 5
n_dim = 1000
alpha = 2.0
n_steps = 3000
"#,
        )],
    },
    Preset {
        name: "grokking",
        about: "modular addition mod 59: SignGD against Adam without weight decay",
        parts: &[(
            "",
            r#"
experiment = "grokking"
seeds = [0, 1, 2]

[sweep]
optimizers = [
  { algo = "signgd", lr = 1e-3 },
  { algo = "adam", lr = 1e-3 },
]
"#,
        )],
    },
];
