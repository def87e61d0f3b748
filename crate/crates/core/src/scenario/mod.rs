//! Synthetic scenes, measurement noise and file formats.
//!
//! A scene is a setup plus an ordered list of shapes, each with a complex
//! permittivity. Cells take the permittivity of the last shape containing
//! their centre and stay at 1 otherwise.
//!
//! Scene JSON, one shape of each kind (coordinates in metres, DOI centred on
//! the origin, `eps` is `[re, im]`):
//!
//! ```json
//! {
//!   "version": 1,
//!   "setup": { "frequency_hz": 4e9, "doi_side_m": 0.15, "n_side": 32,
//!              "tx_positions": [[1.5, 0.0]], "rx_positions": [[0.0, 1.5]] },
//!   "shapes": [
//!     { "kind": "disk", "center": [0.0, 0.0], "radius": 0.03, "eps": [2.0, 0.0] },
//!     { "kind": "rectangle", "corner": [-0.02, -0.01], "size": [0.04, 0.02], "eps": [1.5, -0.1] },
//!     { "kind": "ring", "center": [0.0, 0.0], "inner_radius": 0.02, "outer_radius": 0.035, "eps": [2.5, 0.0] },
//!     { "kind": "polygon", "vertices": [[0.0, 0.0], [0.03, 0.0], [0.0, 0.03]], "eps": [1.8, 0.0] },
//!     { "kind": "austria", "eps": [2.0, 0.0] }
//!   ]
//! }
//! ```
//!
//! The `austria` shape is the usual two-disks-over-a-ring profile. In units
//! of half the DOI side: disks of radius 0.2 at (±0.3, 0.6) and a ring
//! centred at (0, −0.2) with radii 0.3 and 0.6.
//!
//! Measurements from external instruments (for example calibrated
//! multi-frequency datasets) are out of scope; an adapter would implement
//! [`MeasurementSource`] and hand back a [`MeasurementSet`] bound to the
//! matching [`Setup`].

mod io;
mod noise;
mod render;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use io::{
    read_measurements, read_permittivity, read_scene, read_setup, write_measurements, write_permittivity,
    write_scene, write_setup, MEASUREMENT_HEADER, PERMITTIVITY_HEADER,
};
pub use noise::add_noise;
pub use render::{mask_to_pbm, read_pbm, render_map, render_mask, write_pbm, Channel, RenderStats};

use crate::em::{Grid, MeasurementSet, PermittivityMap, Point, Setup};
use crate::error::{Error, Result};

/// Current version of the scene JSON document.
pub const SCENE_VERSION: u32 = 1;

/// Loads measurements from a source other than this crate's own files.
pub trait MeasurementSource {
    fn load(&self, setup: &Setup) -> Result<MeasurementSet>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Disk {
        center: Point,
        radius: f64,
        eps: [f64; 2],
    },
    /// Axis-aligned, `corner` is the lower-left vertex.
    Rectangle {
        corner: Point,
        size: [f64; 2],
        eps: [f64; 2],
    },
    Ring {
        center: Point,
        inner_radius: f64,
        outer_radius: f64,
        eps: [f64; 2],
    },
    /// Simple polygon, vertices in order.
    Polygon {
        vertices: Vec<Point>,
        eps: [f64; 2],
    },
    Austria {
        eps: [f64; 2],
    },
}

impl Shape {
    pub fn eps(&self) -> Complex64 {
        let e = match self {
            Shape::Disk { eps, .. }
            | Shape::Rectangle { eps, .. }
            | Shape::Ring { eps, .. }
            | Shape::Polygon { eps, .. }
            | Shape::Austria { eps } => eps,
        };
        Complex64::new(e[0], e[1])
    }

    /// Whether `p` lies inside the shape; `half` is half the DOI side.
    pub fn contains(&self, p: Point, half: f64) -> bool {
        let dist = |c: Point| (p[0] - c[0]).hypot(p[1] - c[1]);
        match self {
            Shape::Disk { center, radius, .. } => dist(*center) <= *radius,
            Shape::Rectangle { corner, size, .. } => {
                p[0] >= corner[0] && p[0] <= corner[0] + size[0] && p[1] >= corner[1] && p[1] <= corner[1] + size[1]
            }
            Shape::Ring {
                center,
                inner_radius,
                outer_radius,
                ..
            } => {
                let d = dist(*center);
                d >= *inner_radius && d <= *outer_radius
            }
            Shape::Polygon { vertices, .. } => point_in_polygon(p, vertices),
            Shape::Austria { .. } => {
                let q = [p[0] / half, p[1] / half];
                let d = |c: Point| (q[0] - c[0]).hypot(q[1] - c[1]);
                d([-0.3, 0.6]) <= 0.2 || d([0.3, 0.6]) <= 0.2 || (0.3..=0.6).contains(&d([0.0, -0.2]))
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    fn bounds(&self, half: f64) -> (Point, Point) {
        match self {
            Shape::Disk { center, radius, .. } => {
                ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
            }
            Shape::Rectangle { corner, size, .. } => (*corner, [corner[0] + size[0], corner[1] + size[1]]),
            Shape::Ring {
                center, outer_radius, ..
            } => (
                [center[0] - outer_radius, center[1] - outer_radius],
                [center[0] + outer_radius, center[1] + outer_radius],
            ),
            Shape::Polygon { vertices, .. } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for a in 0..2 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                (lo, hi)
            }
            Shape::Austria { .. } => ([-0.6 * half, -0.8 * half], [0.6 * half, 0.8 * half]),
        }
    }

    pub fn validate(&self, doi_side: f64) -> Result<()> {
        let eps = self.eps();
        if !(eps.re.is_finite() && eps.im.is_finite()) {
            return Err(Error::Config(format!("shape permittivity must be finite, got {eps}")));
        }
        let geometry_ok = match self {
            Shape::Disk { radius, .. } => *radius > 0.0,
            Shape::Rectangle { size, .. } => size[0] > 0.0 && size[1] > 0.0,
            Shape::Ring {
                inner_radius,
                outer_radius,
                ..
            } => *inner_radius >= 0.0 && outer_radius > inner_radius,
            Shape::Polygon { vertices, .. } => vertices.len() >= 3,
            Shape::Austria { .. } => true,
        };
        if !geometry_ok {
            return Err(Error::Config(format!("degenerate shape {self:?}")));
        }
        let half = doi_side / 2.0;
        let (lo, hi) = self.bounds(half);
        let slack = 1e-12 * doi_side;
        let inside = lo.iter().chain(&hi).all(|v| v.is_finite() && v.abs() <= half + slack);
        if !inside {
            return Err(Error::Config(format!("shape {self:?} extends outside the {doi_side} m DOI")));
        }
        Ok(())
    }
}

fn point_in_polygon(p: Point, vertices: &[Point]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "scene_version")]
    pub version: u32,
    pub setup: Setup,
    #[serde(default)]
    pub shapes: Vec<Shape>,
}

fn scene_version() -> u32 {
    SCENE_VERSION
}

impl SceneSpec {
    pub fn new(setup: Setup, shapes: Vec<Shape>) -> Result<Self> {
        let s = Self {
            version: SCENE_VERSION,
            setup,
            shapes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_VERSION {
            return Err(Error::Config(format!("unsupported scene version {}", self.version)));
        }
        self.setup.validate()?;
        for s in &self.shapes {
            s.validate(self.setup.doi_side_m)?;
        }
        Ok(())
    }
}

/// Paints `shapes` onto `grid` in order.
pub fn rasterize_shapes(shapes: &[Shape], grid: &Grid, doi_side: f64) -> PermittivityMap {
    let n = grid.n_side;
    let mut map = PermittivityMap::background(n);
    let half = doi_side / 2.0;
    for (k, &c) in grid.cell_centers.iter().enumerate() {
        if let Some(s) = shapes.iter().rev().find(|s| s.contains(c, half)) {
            map.values[[k / n, k % n]] = s.eps();
        }
    }
    map
}

pub fn rasterize(scene: &SceneSpec) -> Result<PermittivityMap> {
    scene.validate()?;
    Ok(rasterize_shapes(&scene.shapes, &scene.setup.grid(), scene.setup.doi_side_m))
}

/// The reference geometry (4 GHz, 0.15 m, 36/36 on a 20λ ring) on an
/// `n_side` grid.
pub fn default_setup(n_side: usize) -> Result<Setup> {
    Setup::reference().with_n_side(n_side)
}

/// Centred disk.
pub fn disk_scene(setup: &Setup, radius: f64, eps: Complex64) -> Result<SceneSpec> {
    SceneSpec::new(
        setup.clone(),
        vec![Shape::Disk {
            center: [0.0, 0.0],
            radius,
            eps: [eps.re, eps.im],
        }],
    )
}

/// Two equal disks side by side on the x axis, `gap` apart at their closest points.
pub fn two_disks_scene(setup: &Setup, radius: f64, gap: f64, eps: Complex64) -> Result<SceneSpec> {
    let x = radius + gap / 2.0;
    let disk = |cx: f64| Shape::Disk {
        center: [cx, 0.0],
        radius,
        eps: [eps.re, eps.im],
    };
    SceneSpec::new(setup.clone(), vec![disk(-x), disk(x)])
}

/// Dimensions of the tube scene, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeGeometry {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Tube wall permittivity (real).
    pub wall_eps: f64,
    /// Defect rectangle: lower-left corner and size.
    pub defect_corner: Point,
    pub defect_size: [f64; 2],
    /// Defect permittivity (real).
    pub defect_eps: f64,
}

impl Default for TubeGeometry {
    fn default() -> Self {
        Self {
            inner_radius: 0.02,
            outer_radius: 0.035,
            wall_eps: 2.5,
            defect_corner: [0.021, -0.007],
            defect_size: [0.013, 0.014],
            defect_eps: 1.0,
        }
    }
}

/// Sound tube: a centred ring.
pub fn tube_scene(setup: &Setup, geom: &TubeGeometry) -> Result<SceneSpec> {
    SceneSpec::new(
        setup.clone(),
        vec![Shape::Ring {
            center: [0.0, 0.0],
            inner_radius: geom.inner_radius,
            outer_radius: geom.outer_radius,
            eps: [geom.wall_eps, 0.0],
        }],
    )
}

/// Tube with a rectangular defect painted over the wall.
pub fn tube_with_defect_scene(setup: &Setup, geom: &TubeGeometry) -> Result<SceneSpec> {
    let mut scene = tube_scene(setup, geom)?;
    scene.shapes.push(Shape::Rectangle {
        corner: geom.defect_corner,
        size: geom.defect_size,
        eps: [geom.defect_eps, 0.0],
    });
    scene.validate()?;
    Ok(scene)
}

pub fn austria_scene(setup: &Setup, eps: Complex64) -> Result<SceneSpec> {
    SceneSpec::new(setup.clone(), vec![Shape::Austria { eps: [eps.re, eps.im] }])
}
