#ifndef RCM_H
#define RCM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum RcmStatus {
  RCM_STATUS_OK = 0,
  RCM_STATUS_RUNTIME_ERROR = 1,
  RCM_STATUS_VALIDATION_ERROR = 2,
  RCM_STATUS_BUDGET_ERROR = 3,
  RCM_STATUS_NULL_POINTER = 4,
  RCM_STATUS_PANIC = 5,
} RcmStatus;

typedef enum RcmModelKind {
  RCM_MODEL_KIND_CONSTANT = 0,
  // `a` is the retention probability.
  RCM_MODEL_KIND_BERNOULLI = 1,
  // Conductances uniform on `[a, b]`.
  RCM_MODEL_KIND_UNIFORM_ELLIPTIC = 2,
} RcmModelKind;

typedef struct RcmEnvironment RcmEnvironment;

typedef struct RcmGraph RcmGraph;

typedef struct RcmKernelTable RcmKernelTable;

// Final state of one simulated walk.
typedef struct RcmWalkSummary {
  size_t final_position;
  uint32_t final_displacement;
  uint32_t final_running_max;
  bool boundary_hit;
} RcmWalkSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t rcm_last_error_message(char *buf, size_t len);

// Box `[-half, half]^dim` of Z^dim; the base point is the origin.
//
// # Safety
// `out` must be a valid pointer to write a handle into.
enum RcmStatus rcm_lattice_box(size_t dim, size_t half, struct RcmGraph **out);

// Pre-Sierpinski gasket truncated at `level`; the base point is the corner vertex.
//
// # Safety
// `out` must be a valid pointer to write a handle into.
enum RcmStatus rcm_gasket(uint32_t level, struct RcmGraph **out);

// Marks the graph as a finite graph in its own right, with no truncation boundary.
//
// # Safety
// `graph` must be null or a live graph handle.
enum RcmStatus rcm_graph_close(struct RcmGraph *graph);

// # Safety
// `graph` must be null or a live graph handle.
size_t rcm_graph_vertex_count(const struct RcmGraph *graph);

// # Safety
// `graph` must be null or a live graph handle.
size_t rcm_graph_edge_count(const struct RcmGraph *graph);

// # Safety
// `graph` must be null or a live graph handle.
size_t rcm_graph_base_point(const struct RcmGraph *graph);

// Hop distance in the underlying graph.
//
// # Safety
// `graph` must be a live graph handle and `out` writable.
enum RcmStatus rcm_graph_distance(const struct RcmGraph *graph, size_t x, size_t y, size_t *out);

// # Safety
// `graph` must be null or a handle not yet freed.
void rcm_graph_free(struct RcmGraph *graph);

// Samples conductances on a copy of `graph` and extracts the base-point cluster.
//
// # Safety
// `graph` must be a live graph handle and `out` writable.
enum RcmStatus rcm_environment_sample(const struct RcmGraph *graph,
                                      enum RcmModelKind kind,
                                      double a,
                                      double b,
                                      uint64_t master_seed,
                                      uint64_t env_id,
                                      struct RcmEnvironment **out);

// # Safety
// `env` must be null or a live environment handle.
size_t rcm_environment_cluster_size(const struct RcmEnvironment *env);

// # Safety
// `env` must be null or a live environment handle.
bool rcm_environment_in_cluster(const struct RcmEnvironment *env, size_t v);

// # Safety
// `env` must be null or a handle not yet freed.
void rcm_environment_free(struct RcmEnvironment *env);

// One walk of `n_steps` from `start` using the stream `(master_seed, env_id, walk_id)`.
//
// # Safety
// `env` must be a live environment handle and `out` writable.
enum RcmStatus rcm_walk_summary(const struct RcmEnvironment *env,
                                size_t start,
                                uint64_t n_steps,
                                uint64_t walk_id,
                                struct RcmWalkSummary *out);

// Exact `P_n(x, .)` for `n <= horizon`.
//
// # Safety
// `env` must be a live environment handle and `out` writable.
enum RcmStatus rcm_heat_kernel(const struct RcmEnvironment *env,
                               size_t x,
                               size_t horizon,
                               struct RcmKernelTable **out);

// `P_n(x, y)`; zero outside the support.
//
// # Safety
// `table` must be a live kernel handle and `out` writable.
enum RcmStatus rcm_kernel_transition(const struct RcmKernelTable *table,
                                     size_t n,
                                     size_t y,
                                     double *out);

// `p_n(x, y) = P_n(x, y) / mu(y)`.
//
// # Safety
// `table` must be a live kernel handle and `out` writable.
enum RcmStatus rcm_kernel_value(const struct RcmKernelTable *table,
                                size_t n,
                                size_t y,
                                double *out);

// Total mass of row `n`; 1 up to rounding.
//
// # Safety
// `table` must be a live kernel handle and `out` writable.
enum RcmStatus rcm_kernel_row_mass(const struct RcmKernelTable *table, size_t n, double *out);

// # Safety
// `table` must be null or a handle not yet freed.
void rcm_kernel_free(struct RcmKernelTable *table);

// `q^{1/beta} (log log q)^{1 - 1/beta}` for `q > e`.
//
// # Safety
// `out` must be writable.
enum RcmStatus rcm_phi(double q, double beta, double *out);

// `n^{1/beta} (log log n)^{-1/beta}` for `n > e`.
//
// # Safety
// `out` must be writable.
enum RcmStatus rcm_psi(double n, double beta, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RCM_H */
