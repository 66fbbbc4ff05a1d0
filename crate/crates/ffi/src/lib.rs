//! C ABI over the meshforge toolkit.
//!
//! Meshes, vertex trees and active fronts are exposed as opaque handles that
//! the caller frees with the matching `*_free` function. Every fallible entry
//! point returns an [`MfStatus`]; on failure a description is available from
//! [`mf_last_error`] on the same thread. Panics never cross the boundary.
//!
//! A front keeps its tree alive, so a tree handle may be freed while fronts
//! built from it are still in use.

#![allow(clippy::missing_safety_doc)]
// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use meshforge::metrics::{sampled_deviation, MetricsError};
use meshforge::tree::{VertexTree, VTREE_MAGIC};
use meshforge::view::{render_set, screen_space_error};
use meshforge::{
    load_obj, save_obj, simplify, simplify_fully, ActiveFront, AdaptParams, Camera, Mesh, Placement, SimplifyConfig,
    SimplifyError, Vec3,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Reading or writing a file failed.
    Io = 2,
    /// An input file or buffer could not be parsed.
    Parse = 3,
    /// An argument is out of range or inconsistent.
    InvalidArgument = 4,
    /// Simplification ran out of candidate pairs above the face target; the
    /// best mesh reached is still returned.
    TargetUnreachable = 5,
    /// A vertex tree or contraction log is corrupt or inconsistent.
    Tree = 6,
    /// A mesh that must have surface area has none.
    ZeroArea = 7,
    /// An output buffer is too small; the required size was reported.
    BufferTooSmall = 8,
    /// An internal error was caught at the boundary.
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfPlacement {
    /// Quadric minimizer, falling back to the best of the endpoints and midpoint.
    Optimal = 0,
    /// Best of the two endpoints and their midpoint.
    Subset = 1,
    /// Always the midpoint.
    Midpoint = 2,
}

impl From<MfPlacement> for Placement {
    fn from(p: MfPlacement) -> Self {
        match p {
            MfPlacement::Optimal => Placement::Optimal,
            MfPlacement::Subset => Placement::Subset,
            MfPlacement::Midpoint => Placement::Midpoint,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfSimplifyOptions {
    pub target_faces: usize,
    /// Also pair vertices closer than this without sharing an edge; 0 for edges only.
    pub pair_threshold: f64,
    pub placement: MfPlacement,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MfSimplifyReport {
    pub contractions: usize,
    pub total_cost: f64,
    pub target_reached: bool,
}

/// Pinhole camera; `forward` and `up` must be orthonormal.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfCamera {
    pub eye: [f64; 3],
    pub forward: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub viewport_height: f64,
    pub near: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfAdaptParams {
    pub tau: f64,
    pub tau_silhouette: f64,
    pub hysteresis: f64,
    /// Cap on splits plus merges per call; 0 for no cap.
    pub max_ops_per_frame: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MfAdaptStats {
    pub splits: usize,
    pub merges: usize,
    pub deferred: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MfDeviation {
    pub mean: f64,
    pub max: f64,
    pub samples: usize,
    pub seed: u64,
    pub symmetric: bool,
}

/// Triangle mesh handle.
pub struct MfMesh {
    mesh: Mesh,
}

/// Vertex tree handle.
pub struct MfTree {
    tree: Arc<VertexTree>,
}

/// Active front over a vertex tree.
pub struct MfFront {
    tree: Arc<VertexTree>,
    front: ActiveFront,
}

struct Failure {
    status: MfStatus,
    message: String,
}

fn fail(status: MfStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn call(f: impl FnOnce() -> Result<MfStatus, Failure>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            set_last_error(&format!("internal error: {msg}"));
            MfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(MfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(MfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(MfStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(MfStatus::InvalidArgument, "path is not UTF-8"))
}

fn read_file(path: &PathBuf) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| fail(MfStatus::Io, format!("{}: {e}", path.display())))
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| fail(MfStatus::Io, format!("{}: {e}", path.display())))
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn camera(c: &MfCamera) -> Result<Camera, Failure> {
    Camera::new(
        vec3(c.eye),
        vec3(c.forward),
        vec3(c.up),
        c.fov_y,
        c.viewport_height,
        c.near,
    )
    .map_err(|e| fail(MfStatus::InvalidArgument, e.to_string()))
}

fn simplify_failure(e: SimplifyError) -> Failure {
    fail(MfStatus::InvalidArgument, e.to_string())
}

fn into_handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Most recent error message on this thread, or null if none occurred yet.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a Wavefront OBJ file.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_load_obj(path: *const c_char, out: *mut *mut MfMesh) -> MfStatus {
    call(|| {
        let out = borrow_mut(out, "out")?;
        let path = path_arg(path)?;
        let text = String::from_utf8(read_file(&path)?)
            .map_err(|_| fail(MfStatus::Parse, format!("{}: not UTF-8", path.display())))?;
        let mesh = load_obj(&text).map_err(|e| fail(MfStatus::Parse, format!("{}: {e}", path.display())))?;
        *out = into_handle(MfMesh { mesh });
        Ok(MfStatus::Ok)
    })
}

/// Builds a mesh from `vertex_count` xyz triples and `face_count` index
/// triples (zero-based).
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_from_buffers(
    positions: *const f64,
    vertex_count: usize,
    indices: *const u32,
    face_count: usize,
    out: *mut *mut MfMesh,
) -> MfStatus {
    call(|| {
        let out = borrow_mut(out, "out")?;
        if (positions.is_null() && vertex_count > 0) || (indices.is_null() && face_count > 0) {
            return Err(fail(MfStatus::NullPointer, "buffer is null"));
        }
        let coords = if vertex_count == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(positions, vertex_count * 3)
        };
        let corners = if face_count == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(indices, face_count * 3)
        };
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(fail(MfStatus::InvalidArgument, "non-finite coordinate"));
        }
        let mesh = Mesh::new(
            coords.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            corners
                .chunks_exact(3)
                .map(|f| [f[0] as usize, f[1] as usize, f[2] as usize])
                .collect(),
        );
        mesh.validate().map_err(|e| fail(MfStatus::InvalidArgument, e))?;
        *out = into_handle(MfMesh { mesh });
        Ok(MfStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_mesh_free(mesh: *mut MfMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mf_mesh_vertex_count(mesh: *const MfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.vertex_count())
}

#[no_mangle]
pub unsafe extern "C" fn mf_mesh_face_count(mesh: *const MfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.face_count())
}

/// Copies xyz coordinates into `out`, which must hold `3 · vertex_count` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_copy_positions(mesh: *const MfMesh, out: *mut f64, len: usize) -> MfStatus {
    call(|| {
        let m = &borrow(mesh, "mesh")?.mesh;
        let need = 3 * m.vertex_count();
        if len < need {
            return Err(fail(
                MfStatus::BufferTooSmall,
                format!("need {need} doubles, got {len}"),
            ));
        }
        if need > 0 {
            let dst = std::slice::from_raw_parts_mut(borrow_mut(out, "out")?, need);
            for (d, p) in dst.chunks_exact_mut(3).zip(&m.positions) {
                d.copy_from_slice(p.as_slice());
            }
        }
        Ok(MfStatus::Ok)
    })
}

/// Copies face corner indices into `out`, which must hold `3 · face_count` values.
#[no_mangle]
pub unsafe extern "C" fn mf_mesh_copy_faces(mesh: *const MfMesh, out: *mut u32, len: usize) -> MfStatus {
    call(|| {
        let m = &borrow(mesh, "mesh")?.mesh;
        let need = 3 * m.face_count();
        if len < need {
            return Err(fail(
                MfStatus::BufferTooSmall,
                format!("need {need} indices, got {len}"),
            ));
        }
        if need > 0 {
            let dst = std::slice::from_raw_parts_mut(borrow_mut(out, "out")?, need);
            for (d, f) in dst.chunks_exact_mut(3).zip(&m.faces) {
                for k in 0..3 {
                    d[k] = u32::try_from(f[k]).map_err(|_| fail(MfStatus::InvalidArgument, "index exceeds u32"))?;
                }
            }
        }
        Ok(MfStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_mesh_save_obj(mesh: *const MfMesh, path: *const c_char) -> MfStatus {
    call(|| {
        let m = &borrow(mesh, "mesh")?.mesh;
        write_file(&path_arg(path)?, save_obj(m).as_bytes())?;
        Ok(MfStatus::Ok)
    })
}

/// Simplifies `mesh` into a new mesh. On [`MfStatus::TargetUnreachable`]
/// `*out` still receives the best mesh reached. `report` may be null.
#[no_mangle]
pub unsafe extern "C" fn mf_simplify(
    mesh: *const MfMesh,
    options: *const MfSimplifyOptions,
    out: *mut *mut MfMesh,
    report: *mut MfSimplifyReport,
) -> MfStatus {
    call(|| {
        let m = &borrow(mesh, "mesh")?.mesh;
        let o = borrow(options, "options")?;
        let out = borrow_mut(out, "out")?;
        let cfg = SimplifyConfig {
            target_faces: o.target_faces,
            pair_threshold: o.pair_threshold,
            placement: o.placement.into(),
        };
        let result = simplify(m, &cfg).map_err(simplify_failure)?;
        if let Some(r) = report.as_mut() {
            *r = MfSimplifyReport {
                contractions: result.log.len(),
                total_cost: result.total_cost(),
                target_reached: result.target_reached,
            };
        }
        let shortfall = result.shortfall(cfg.target_faces);
        *out = into_handle(MfMesh { mesh: result.mesh });
        match shortfall {
            Some(e) => {
                set_last_error(&e.to_string());
                Ok(MfStatus::TargetUnreachable)
            }
            None => Ok(MfStatus::Ok),
        }
    })
}

/// Builds a vertex tree. With null `options` every candidate pair is
/// contracted (a full hierarchy); otherwise simplification stops at
/// `options->target_faces`.
#[no_mangle]
pub unsafe extern "C" fn mf_tree_build(
    mesh: *const MfMesh,
    options: *const MfSimplifyOptions,
    out: *mut *mut MfTree,
) -> MfStatus {
    call(|| {
        let m = &borrow(mesh, "mesh")?.mesh;
        let out = borrow_mut(out, "out")?;
        let result = match options.as_ref() {
            Some(o) => simplify(
                m,
                &SimplifyConfig {
                    target_faces: o.target_faces,
                    pair_threshold: o.pair_threshold,
                    placement: o.placement.into(),
                },
            ),
            None => simplify_fully(m, &SimplifyConfig::new(0)),
        }
        .map_err(simplify_failure)?;
        let tree = VertexTree::build(m, &result.log).map_err(|e| fail(MfStatus::Tree, e.to_string()))?;
        *out = into_handle(MfTree { tree: Arc::new(tree) });
        Ok(MfStatus::Ok)
    })
}

/// Loads a binary VTREE file or its JSON export.
#[no_mangle]
pub unsafe extern "C" fn mf_tree_load(path: *const c_char, out: *mut *mut MfTree) -> MfStatus {
    call(|| {
        let out = borrow_mut(out, "out")?;
        let path = path_arg(path)?;
        let bytes = read_file(&path)?;
        let parsed = if bytes.starts_with(VTREE_MAGIC) {
            VertexTree::from_bytes(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| fail(MfStatus::Tree, "not a VTREE stream"))?;
            VertexTree::from_json(&text)
        };
        let tree = parsed.map_err(|e| fail(MfStatus::Tree, format!("{}: {e}", path.display())))?;
        *out = into_handle(MfTree { tree: Arc::new(tree) });
        Ok(MfStatus::Ok)
    })
}

/// Writes the tree as binary VTREE, or as the JSON export when `json` is set.
#[no_mangle]
pub unsafe extern "C" fn mf_tree_save(tree: *const MfTree, path: *const c_char, json: bool) -> MfStatus {
    call(|| {
        let t = &borrow(tree, "tree")?.tree;
        let bytes = if json { t.to_json().into_bytes() } else { t.to_bytes() };
        write_file(&path_arg(path)?, &bytes)?;
        Ok(MfStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_tree_free(tree: *mut MfTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mf_tree_node_count(tree: *const MfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.node_count())
}

#[no_mangle]
pub unsafe extern "C" fn mf_tree_leaf_count(tree: *const MfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.leaf_count)
}

#[no_mangle]
pub unsafe extern "C" fn mf_tree_root_count(tree: *const MfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.roots.len())
}

/// Coarsest mesh whose active nodes all have merge cost at most `error`
/// (`INFINITY` selects the roots).
#[no_mangle]
pub unsafe extern "C" fn mf_tree_extract(tree: *const MfTree, error: f64, out: *mut *mut MfMesh) -> MfStatus {
    call(|| {
        let t = &borrow(tree, "tree")?.tree;
        let out = borrow_mut(out, "out")?;
        if !(error >= 0.0) {
            return Err(fail(MfStatus::InvalidArgument, "error must be non-negative"));
        }
        *out = into_handle(MfMesh {
            mesh: t.extract_at_error(error),
        });
        Ok(MfStatus::Ok)
    })
}

/// Projected error radius of `node` in pixels (`INFINITY` when its error
/// sphere reaches the near plane).
#[no_mangle]
pub unsafe extern "C" fn mf_tree_screen_error(
    tree: *const MfTree,
    node: usize,
    cam: *const MfCamera,
    out: *mut f64,
) -> MfStatus {
    call(|| {
        let t = &borrow(tree, "tree")?.tree;
        let cam = camera(borrow(cam, "camera")?)?;
        let out = borrow_mut(out, "out")?;
        let n = t
            .nodes
            .get(node)
            .ok_or_else(|| fail(MfStatus::InvalidArgument, format!("node {node} out of range")))?;
        *out = screen_space_error(n, &cam);
        Ok(MfStatus::Ok)
    })
}

/// New front with only the roots active. The front shares ownership of the tree.
#[no_mangle]
pub unsafe extern "C" fn mf_front_new(tree: *const MfTree, out: *mut *mut MfFront) -> MfStatus {
    call(|| {
        let t = borrow(tree, "tree")?;
        let out = borrow_mut(out, "out")?;
        *out = into_handle(MfFront {
            front: ActiveFront::roots_only(&t.tree),
            tree: Arc::clone(&t.tree),
        });
        Ok(MfStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_front_free(front: *mut MfFront) {
    if !front.is_null() {
        drop(Box::from_raw(front));
    }
}

/// One adaptation pass for `cam`. `stats` may be null.
#[no_mangle]
pub unsafe extern "C" fn mf_front_adapt(
    front: *mut MfFront,
    cam: *const MfCamera,
    params: *const MfAdaptParams,
    stats: *mut MfAdaptStats,
) -> MfStatus {
    call(|| {
        let f = borrow_mut(front, "front")?;
        let cam = camera(borrow(cam, "camera")?)?;
        let p = borrow(params, "params")?;
        let mut params = AdaptParams::new(p.tau, p.tau_silhouette, p.hysteresis)
            .map_err(|e| fail(MfStatus::InvalidArgument, e.to_string()))?;
        params.max_ops_per_frame = (p.max_ops_per_frame > 0).then_some(p.max_ops_per_frame);
        let s = f.front.adapt(&f.tree, &cam, &params);
        if let Some(out) = stats.as_mut() {
            *out = MfAdaptStats {
                splits: s.splits,
                merges: s.merges,
                deferred: s.deferred,
            };
        }
        Ok(MfStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn mf_front_active_count(front: *const MfFront) -> usize {
    front.as_ref().map_or(0, |f| f.front.active_count())
}

/// Copies the front's triangles: node ids (3 per triangle) into `ids` and
/// corner positions (9 doubles per triangle) into `positions`; either buffer
/// may be null. `*count` receives the triangle count. Passing both buffers
/// null queries the count; otherwise `capacity` (in triangles) must cover it.
#[no_mangle]
pub unsafe extern "C" fn mf_front_render(
    front: *const MfFront,
    ids: *mut u32,
    positions: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> MfStatus {
    call(|| {
        let f = borrow(front, "front")?;
        let count = borrow_mut(count, "count")?;
        let tris = render_set(&f.front, &f.tree);
        *count = tris.len();
        if ids.is_null() && positions.is_null() {
            return Ok(MfStatus::Ok);
        }
        if capacity < tris.len() {
            return Err(fail(
                MfStatus::BufferTooSmall,
                format!("need {} triangles, capacity {capacity}", tris.len()),
            ));
        }
        if !ids.is_null() && !tris.is_empty() {
            let dst = std::slice::from_raw_parts_mut(ids, 3 * tris.len());
            for (d, t) in dst.chunks_exact_mut(3).zip(&tris) {
                for (slot, &id) in d.iter_mut().zip(&t.ids) {
                    *slot = u32::try_from(id).map_err(|_| fail(MfStatus::InvalidArgument, "id exceeds u32"))?;
                }
            }
        }
        if !positions.is_null() && !tris.is_empty() {
            let dst = std::slice::from_raw_parts_mut(positions, 9 * tris.len());
            for (d, t) in dst.chunks_exact_mut(9).zip(&tris) {
                for (k, p) in t.positions.iter().enumerate() {
                    d[3 * k..3 * k + 3].copy_from_slice(p.as_slice());
                }
            }
        }
        Ok(MfStatus::Ok)
    })
}

/// Sampled surface deviation from `a` to `b` (both ways when `symmetric`).
#[no_mangle]
pub unsafe extern "C" fn mf_compare(
    a: *const MfMesh,
    b: *const MfMesh,
    samples: usize,
    seed: u64,
    symmetric: bool,
    out: *mut MfDeviation,
) -> MfStatus {
    call(|| {
        let a = &borrow(a, "a")?.mesh;
        let b = &borrow(b, "b")?.mesh;
        let out = borrow_mut(out, "out")?;
        let r = sampled_deviation(a, b, samples, seed, symmetric).map_err(|e| match e {
            MetricsError::ZeroArea | MetricsError::NoFaces => fail(MfStatus::ZeroArea, e.to_string()),
            MetricsError::NoSamples => fail(MfStatus::InvalidArgument, e.to_string()),
        })?;
        *out = MfDeviation {
            mean: r.mean,
            max: r.max,
            samples: r.samples,
            seed: r.seed,
            symmetric,
        };
        Ok(MfStatus::Ok)
    })
}
