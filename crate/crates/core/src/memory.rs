//! Analytic activation-memory model.
//!
//! An [`ArchSpec`] is an ordered list of layers, each producing one stored
//! activation tensor. Shapes are propagated symbolically from the input
//! side, so the estimate covers activations only: no weights, workspace or
//! allocator overhead.

use std::fmt;

use crate::error::{HernError, Result};
use crate::model::ModelConfig;

pub const BYTES_PER_ELEMENT: u64 = 4;

/// Largest side [`max_feasible_patch`] will consider.
const MAX_SIDE: usize = 1 << 20;

/// Spatial grid an activation lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grid {
    /// `side * 2^log2` (negative for downsampled tiers).
    Scaled { log2: i32 },
    /// Fixed `n x n`, independent of the input side.
    Fixed(usize),
    /// A single position (pooled vectors).
    Vector,
}

impl Grid {
    pub const FULL: Grid = Grid::Scaled { log2: 0 };

    fn positions(self, side: usize) -> u64 {
        match self {
            Grid::Scaled { log2 } => {
                let s = if log2 >= 0 {
                    (side as u64) << log2
                } else {
                    side as u64 >> (-log2)
                };
                s * s
            }
            Grid::Fixed(n) => (n * n) as u64,
            Grid::Vector => 1,
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Scaled { log2: 0 } => write!(f, "full"),
            Grid::Scaled { log2 } if *log2 < 0 => write!(f, "1/{}", 1 << -log2),
            Grid::Scaled { log2 } => write!(f, "x{}", 1 << log2),
            Grid::Fixed(n) => write!(f, "{n}x{n}"),
            Grid::Vector => write!(f, "vector"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Input,
    Conv,
    ConvTranspose,
    Activation,
    Add,
    Mul,
    Concat,
    /// Bilinear resize to a fixed grid.
    Resize(usize),
    GlobalPool,
    Dense,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Input => "input",
            LayerKind::Conv => "conv",
            LayerKind::ConvTranspose => "conv_t",
            LayerKind::Activation => "act",
            LayerKind::Add => "add",
            LayerKind::Mul => "mul",
            LayerKind::Concat => "concat",
            LayerKind::Resize(_) => "resize",
            LayerKind::GlobalPool => "pool",
            LayerKind::Dense => "dense",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub path: String,
    pub kind: LayerKind,
    pub input: Grid,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    pub fn output(&self) -> Grid {
        match (self.kind, self.input) {
            (LayerKind::Resize(n), _) => Grid::Fixed(n),
            (LayerKind::GlobalPool, _) => Grid::Vector,
            (LayerKind::Conv, Grid::Scaled { log2 }) if self.stride == 2 => Grid::Scaled { log2: log2 - 1 },
            (LayerKind::Conv, Grid::Fixed(n)) if self.stride == 2 => Grid::Fixed(n / 2),
            (LayerKind::ConvTranspose, Grid::Scaled { log2 }) if self.stride == 2 => Grid::Scaled { log2: log2 + 1 },
            (LayerKind::ConvTranspose, Grid::Fixed(n)) if self.stride == 2 => Grid::Fixed(n * 2),
            (_, g) => g,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

struct Builder {
    layers: Vec<LayerSpec>,
    grid: Grid,
}

impl Builder {
    fn new() -> Self {
        Builder {
            layers: Vec::new(),
            grid: Grid::FULL,
        }
    }

    fn push(&mut self, path: impl Into<String>, kind: LayerKind, stride: usize, cin: usize, cout: usize, k: usize) {
        let l = LayerSpec {
            path: path.into(),
            kind,
            input: self.grid,
            stride,
            in_channels: cin,
            out_channels: cout,
            kernel: k,
        };
        self.grid = l.output();
        self.layers.push(l);
    }

    fn at(&mut self, grid: Grid) -> &mut Self {
        self.grid = grid;
        self
    }

    fn conv(&mut self, path: String, cin: usize, cout: usize, k: usize, stride: usize) {
        self.push(path, LayerKind::Conv, stride, cin, cout, k);
    }

    fn op(&mut self, path: String, kind: LayerKind, c: usize) {
        self.push(path, kind, 1, c, c, 1);
    }
}

impl ArchSpec {
    /// Mirror of the network's forward pass, one entry per stored tensor.
    pub fn hern(cfg: &ModelConfig) -> Self {
        let (gw, lw, n) = (cfg.global_width, cfg.local_width, cfg.encoder_dim);
        let mut b = Builder::new();
        b.op("input".into(), LayerKind::Input, 4);
        b.conv("head".into(), 4, gw, 3, 1);
        for i in 0..2 {
            b.conv(format!("global.enc.{i}"), gw, gw, 3, 2);
            b.op(format!("global.enc.{i}.act"), LayerKind::Activation, gw);
        }
        for g in 0..cfg.groups {
            for k in 0..cfg.blocks {
                let p = format!("global.groups.{g}.blocks.{k}");
                b.conv(format!("{p}.conv1"), gw, gw, 3, 1);
                b.op(format!("{p}.act"), LayerKind::Activation, gw);
                b.conv(format!("{p}.conv2"), gw, gw, 3, 1);
                b.op(format!("{p}.add"), LayerKind::Add, gw);
            }
            b.conv(format!("global.groups.{g}.conv"), gw, gw, 3, 1);
            b.op(format!("global.groups.{g}.add"), LayerKind::Add, gw);
        }
        b.conv("global.trunk".into(), gw, gw, 3, 1);
        b.op("global.trunk.add".into(), LayerKind::Add, gw);
        for i in 0..2 {
            b.push(format!("global.dec.{i}"), LayerKind::ConvTranspose, 2, gw, gw, 3);
            b.op(format!("global.dec.{i}.act"), LayerKind::Activation, gw);
        }

        b.at(Grid::FULL).conv("local.entry".into(), gw, lw, 1, 1);
        for m in 0..cfg.msrbs {
            let p = format!("local.msrb.{m}");
            b.conv(format!("{p}.conv3_1"), lw, lw, 3, 1);
            b.op(format!("{p}.act3_1"), LayerKind::Activation, lw);
            b.conv(format!("{p}.conv5_1"), lw, lw, 5, 1);
            b.op(format!("{p}.act5_1"), LayerKind::Activation, lw);
            b.op(format!("{p}.cat3"), LayerKind::Concat, 2 * lw);
            b.op(format!("{p}.cat5"), LayerKind::Concat, 2 * lw);
            b.conv(format!("{p}.conv3_2"), 2 * lw, lw, 3, 1);
            b.op(format!("{p}.act3_2"), LayerKind::Activation, lw);
            b.conv(format!("{p}.conv5_2"), 2 * lw, lw, 5, 1);
            b.op(format!("{p}.act5_2"), LayerKind::Activation, lw);
            b.op(format!("{p}.cat"), LayerKind::Concat, 2 * lw);
            b.conv(format!("{p}.fuse"), 2 * lw, lw, 1, 1);
            b.op(format!("{p}.add"), LayerKind::Add, lw);
        }

        b.op("fusion.cat".into(), LayerKind::Concat, gw + lw);
        b.conv("fusion".into(), gw + lw, gw, 3, 1);

        b.at(Grid::FULL)
            .push("encoder.resize", LayerKind::Resize(cfg.fixed_res), 1, 4, 4, 1);
        for p in 0..cfg.encoder_convs {
            let cin = if p == 0 { 4 } else { n };
            b.conv(format!("encoder.convs.{p}"), cin, n, 3, 2);
            b.op(format!("encoder.convs.{p}.act"), LayerKind::Activation, n);
        }
        b.op("encoder.pool".into(), LayerKind::GlobalPool, n);

        b.at(Grid::FULL).op("fusion.add_code".into(), LayerKind::Add, gw);
        if cfg.output_scale == 2 {
            b.push("tail.up", LayerKind::ConvTranspose, 2, gw, gw, 3);
        }
        b.conv("tail.conv".into(), gw, 3, 3, 1);
        ArchSpec {
            name: "hern".into(),
            layers: b.layers,
        }
    }

    /// Full-resolution residual-in-residual trunk whose blocks keep channel
    /// attention (pool, squeeze, excite, gate, rescale). Block paths match
    /// [`ArchSpec::hern`] so layers can be compared one to one.
    pub fn rcan_like(groups: usize, blocks: usize, width: usize, reduction: usize, output_scale: usize) -> Self {
        let squeeze = (width / reduction.max(1)).max(1);
        let mut b = Builder::new();
        b.op("input".into(), LayerKind::Input, 4);
        b.conv("head".into(), 4, width, 3, 1);
        for g in 0..groups {
            for k in 0..blocks {
                let p = format!("global.groups.{g}.blocks.{k}");
                b.conv(format!("{p}.conv1"), width, width, 3, 1);
                b.op(format!("{p}.act"), LayerKind::Activation, width);
                b.conv(format!("{p}.conv2"), width, width, 3, 1);
                b.op(format!("{p}.ca.pool"), LayerKind::GlobalPool, width);
                b.push(format!("{p}.ca.down"), LayerKind::Dense, 1, width, squeeze, 1);
                b.op(format!("{p}.ca.act"), LayerKind::Activation, squeeze);
                b.push(format!("{p}.ca.up"), LayerKind::Dense, 1, squeeze, width, 1);
                b.op(format!("{p}.ca.gate"), LayerKind::Activation, width);
                b.at(Grid::FULL).op(format!("{p}.ca.scale"), LayerKind::Mul, width);
                b.op(format!("{p}.add"), LayerKind::Add, width);
            }
            b.conv(format!("global.groups.{g}.conv"), width, width, 3, 1);
            b.op(format!("global.groups.{g}.add"), LayerKind::Add, width);
        }
        b.conv("global.trunk".into(), width, width, 3, 1);
        b.op("global.trunk.add".into(), LayerKind::Add, width);
        if output_scale == 2 {
            b.push("tail.up", LayerKind::ConvTranspose, 2, width, width, 3);
        }
        b.conv("tail.conv".into(), width, 3, 3, 1);
        ArchSpec {
            name: "rcan_like".into(),
            layers: b.layers,
        }
    }

    /// Baseline with the same group, block and width settings as `cfg` and
    /// the usual channel-attention reduction of 16.
    pub fn rcan_matched(cfg: &ModelConfig) -> Self {
        Self::rcan_like(cfg.groups, cfg.blocks, cfg.global_width, 16, cfg.output_scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(HernError::Config(format!("{}: no layers", self.name)));
        }
        for l in &self.layers {
            if l.stride != 1 && l.stride != 2 {
                return Err(HernError::Config(format!("{}: stride {} not in {{1, 2}}", l.path, l.stride)));
            }
            if l.in_channels == 0 || l.out_channels == 0 {
                return Err(HernError::Config(format!("{}: zero channels", l.path)));
            }
            if let (Grid::Fixed(n), true) = (l.input, l.stride == 2) {
                if n % 2 != 0 {
                    return Err(HernError::Config(format!("{}: fixed grid {n} not halvable", l.path)));
                }
            }
        }
        Ok(())
    }

    /// Input sides must be multiples of this.
    pub fn side_multiple(&self) -> usize {
        let deepest = self
            .layers
            .iter()
            .flat_map(|l| [l.input, l.output()])
            .filter_map(|g| match g {
                Grid::Scaled { log2 } if log2 < 0 => Some(-log2),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        1 << deepest
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerMemory {
    pub path: String,
    pub kind: LayerKind,
    pub grid: Grid,
    pub channels: usize,
    pub elements: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryEstimate {
    pub per_layer: Vec<LayerMemory>,
    /// Sum of per-layer bytes, doubled when gradients are included.
    pub total_bytes: u64,
    pub includes_gradients: bool,
    pub bytes_per_element: u64,
}

impl MemoryEstimate {
    pub fn layer(&self, path: &str) -> Option<&LayerMemory> {
        self.per_layer.iter().find(|l| l.path == path)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,kind,grid,channels,elements,bytes\n");
        for l in &self.per_layer {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                l.path, l.kind, l.grid, l.channels, l.elements, l.bytes
            ));
        }
        s
    }
}

/// Stored activations of one forward pass at `patch_side`.
pub fn estimate_memory(spec: &ArchSpec, patch_side: usize, batch: usize, include_grad: bool) -> Result<MemoryEstimate> {
    spec.validate()?;
    let m = spec.side_multiple();
    if patch_side == 0 || !patch_side.is_multiple_of(m) {
        return Err(HernError::Dimension(format!(
            "{}: patch side {patch_side} must be a positive multiple of {m}",
            spec.name
        )));
    }
    if batch == 0 {
        return Err(HernError::Parameter("batch must be at least 1".into()));
    }
    let per_layer: Vec<LayerMemory> = spec
        .layers
        .iter()
        .map(|l| {
            let grid = l.output();
            let elements = l.out_channels as u64 * grid.positions(patch_side) * batch as u64;
            LayerMemory {
                path: l.path.clone(),
                kind: l.kind,
                grid,
                channels: l.out_channels,
                elements,
                bytes: elements * BYTES_PER_ELEMENT,
            }
        })
        .collect();
    let forward: u64 = per_layer.iter().map(|l| l.bytes).sum();
    Ok(MemoryEstimate {
        per_layer,
        total_bytes: if include_grad { 2 * forward } else { forward },
        includes_gradients: include_grad,
        bytes_per_element: BYTES_PER_ELEMENT,
    })
}

/// Largest valid side whose estimate fits in `budget_bytes`.
pub fn max_feasible_patch(spec: &ArchSpec, budget_bytes: u64, batch: usize, include_grad: bool) -> Result<usize> {
    let m = spec.side_multiple();
    let fits = |k: usize| -> Result<bool> {
        Ok(estimate_memory(spec, k * m, batch, include_grad)?.total_bytes <= budget_bytes)
    };
    if !fits(1)? {
        let need = estimate_memory(spec, m, batch, include_grad)?.total_bytes;
        return Err(HernError::Parameter(format!(
            "{}: budget {budget_bytes} B is below the {need} B needed at the smallest side {m}",
            spec.name
        )));
    }
    // invariant: fits(lo) and !fits(hi)
    let (mut lo, mut hi) = (1usize, 2usize);
    while fits(hi)? {
        lo = hi;
        hi *= 2;
        if hi * m > MAX_SIDE {
            return Err(HernError::Parameter(format!(
                "{}: budget fits sides beyond {MAX_SIDE}",
                spec.name
            )));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo * m)
}

/// `(side, bytes)` rows for every valid side up to `max_side`.
pub fn memory_curve(spec: &ArchSpec, max_side: usize, batch: usize, include_grad: bool) -> Result<Vec<(usize, u64)>> {
    let m = spec.side_multiple();
    (1..=max_side / m)
        .map(|k| Ok((k * m, estimate_memory(spec, k * m, batch, include_grad)?.total_bytes)))
        .collect()
}
