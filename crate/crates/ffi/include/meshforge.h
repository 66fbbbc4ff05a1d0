#ifndef MESHFORGE_H
#define MESHFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MfPlacement {
  // Quadric minimizer, falling back to the best of the endpoints and midpoint.
  MF_PLACEMENT_OPTIMAL = 0,
  // Best of the two endpoints and their midpoint.
  MF_PLACEMENT_SUBSET = 1,
  // Always the midpoint.
  MF_PLACEMENT_MIDPOINT = 2,
} MfPlacement;

// Result of every fallible call.
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  // A required pointer argument was null.
  MF_STATUS_NULL_POINTER = 1,
  // Reading or writing a file failed.
  MF_STATUS_IO = 2,
  // An input file or buffer could not be parsed.
  MF_STATUS_PARSE = 3,
  // An argument is out of range or inconsistent.
  MF_STATUS_INVALID_ARGUMENT = 4,
  // Simplification ran out of candidate pairs above the face target; the
  // best mesh reached is still returned.
  MF_STATUS_TARGET_UNREACHABLE = 5,
  // A vertex tree or contraction log is corrupt or inconsistent.
  MF_STATUS_TREE = 6,
  // A mesh that must have surface area has none.
  MF_STATUS_ZERO_AREA = 7,
  // An output buffer is too small; the required size was reported.
  MF_STATUS_BUFFER_TOO_SMALL = 8,
  // An internal error was caught at the boundary.
  MF_STATUS_PANIC = 9,
} MfStatus;

// Active front over a vertex tree.
typedef struct MfFront MfFront;

// Triangle mesh handle.
typedef struct MfMesh MfMesh;

// Vertex tree handle.
typedef struct MfTree MfTree;

typedef struct MfSimplifyOptions {
  size_t target_faces;
  // Also pair vertices closer than this without sharing an edge; 0 for edges only.
  double pair_threshold;
  enum MfPlacement placement;
} MfSimplifyOptions;

typedef struct MfSimplifyReport {
  size_t contractions;
  double total_cost;
  bool target_reached;
} MfSimplifyReport;

// Pinhole camera; `forward` and `up` must be orthonormal.
typedef struct MfCamera {
  double eye[3];
  double forward[3];
  double up[3];
  // Vertical field of view in radians.
  double fov_y;
  double viewport_height;
  double near;
} MfCamera;

typedef struct MfAdaptParams {
  double tau;
  double tau_silhouette;
  double hysteresis;
  // Cap on splits plus merges per call; 0 for no cap.
  size_t max_ops_per_frame;
} MfAdaptParams;

typedef struct MfAdaptStats {
  size_t splits;
  size_t merges;
  size_t deferred;
} MfAdaptStats;

typedef struct MfDeviation {
  double mean;
  double max;
  size_t samples;
  uint64_t seed;
  bool symmetric;
} MfDeviation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Most recent error message on this thread, or null if none occurred yet.
// The pointer stays valid until the next failing call on the same thread.
const char *mf_last_error(void);

// Library version as a static nul-terminated string.
const char *mf_version(void);

// Loads a Wavefront OBJ file.
enum MfStatus mf_mesh_load_obj(const char *path, struct MfMesh **out);

// Builds a mesh from `vertex_count` xyz triples and `face_count` index
// triples (zero-based).
enum MfStatus mf_mesh_from_buffers(const double *positions,
                                   size_t vertex_count,
                                   const uint32_t *indices,
                                   size_t face_count,
                                   struct MfMesh **out);

void mf_mesh_free(struct MfMesh *mesh);

size_t mf_mesh_vertex_count(const struct MfMesh *mesh);

size_t mf_mesh_face_count(const struct MfMesh *mesh);

// Copies xyz coordinates into `out`, which must hold `3 · vertex_count` doubles.
enum MfStatus mf_mesh_copy_positions(const struct MfMesh *mesh, double *out, size_t len);

// Copies face corner indices into `out`, which must hold `3 · face_count` values.
enum MfStatus mf_mesh_copy_faces(const struct MfMesh *mesh, uint32_t *out, size_t len);

enum MfStatus mf_mesh_save_obj(const struct MfMesh *mesh, const char *path);

// Simplifies `mesh` into a new mesh. On [`MfStatus::TargetUnreachable`]
// `*out` still receives the best mesh reached. `report` may be null.
enum MfStatus mf_simplify(const struct MfMesh *mesh,
                          const struct MfSimplifyOptions *options,
                          struct MfMesh **out,
                          struct MfSimplifyReport *report);

// Builds a vertex tree. With null `options` every candidate pair is
// contracted (a full hierarchy); otherwise simplification stops at
// `options->target_faces`.
enum MfStatus mf_tree_build(const struct MfMesh *mesh,
                            const struct MfSimplifyOptions *options,
                            struct MfTree **out);

// Loads a binary VTREE file or its JSON export.
enum MfStatus mf_tree_load(const char *path, struct MfTree **out);

// Writes the tree as binary VTREE, or as the JSON export when `json` is set.
enum MfStatus mf_tree_save(const struct MfTree *tree, const char *path, bool json);

void mf_tree_free(struct MfTree *tree);

size_t mf_tree_node_count(const struct MfTree *tree);

size_t mf_tree_leaf_count(const struct MfTree *tree);

size_t mf_tree_root_count(const struct MfTree *tree);

// Coarsest mesh whose active nodes all have merge cost at most `error`
// (`INFINITY` selects the roots).
enum MfStatus mf_tree_extract(const struct MfTree *tree, double error, struct MfMesh **out);

// Projected error radius of `node` in pixels (`INFINITY` when its error
// sphere reaches the near plane).
enum MfStatus mf_tree_screen_error(const struct MfTree *tree,
                                   size_t node,
                                   const struct MfCamera *cam,
                                   double *out);

// New front with only the roots active. The front shares ownership of the tree.
enum MfStatus mf_front_new(const struct MfTree *tree, struct MfFront **out);

void mf_front_free(struct MfFront *front);

// One adaptation pass for `cam`. `stats` may be null.
enum MfStatus mf_front_adapt(struct MfFront *front,
                             const struct MfCamera *cam,
                             const struct MfAdaptParams *params,
                             struct MfAdaptStats *stats);

size_t mf_front_active_count(const struct MfFront *front);

// Copies the front's triangles: node ids (3 per triangle) into `ids` and
// corner positions (9 doubles per triangle) into `positions`; either buffer
// may be null. `*count` receives the triangle count. Passing both buffers
// null queries the count; otherwise `capacity` (in triangles) must cover it.
enum MfStatus mf_front_render(const struct MfFront *front,
                              uint32_t *ids,
                              double *positions,
                              size_t capacity,
                              size_t *count);

// Sampled surface deviation from `a` to `b` (both ways when `symmetric`).
enum MfStatus mf_compare(const struct MfMesh *a,
                         const struct MfMesh *b,
                         size_t samples,
                         uint64_t seed,
                         bool symmetric,
                         struct MfDeviation *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHFORGE_H */
