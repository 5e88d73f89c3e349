// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <vector>

#include "mafem/core.hpp"
#include "mafem/eigsolve.hpp"
#include "mafem/fespace.hpp"
#include "mafem/mesh.hpp"

namespace mafem
{

// Squared local indicators, one row per cluster member and one column per
// triangle, split into the three residual terms:
//   volume: || h_T (sigma - grad u) ||_T^2
//   curl:   || h_T curl sigma ||_T^2
//   jump:   sum_{E in T} h_E || [sigma]_E . t_E ||_E^2  (trace on boundary edges)
struct IndicatorField
{
  Mat volume;
  Mat curl;
  Mat jump;

  int members() const { return static_cast<int>(volume.rows()); }
  Index elements() const { return static_cast<Index>(volume.cols()); }
  Mat total() const { return volume + curl + jump; }
  // Per-element indicator summed over the cluster.
  Vec element_sums() const { return total().colwise().sum().transpose(); }
};

// The seminorm |.|_{eta,T}^2 applied to pairs (sigma_h, u_h), sigma_h the
// discrete gradient of u_h.
IndicatorField estimate(const Mesh &mesh, const DofMap &dofs, const std::vector<Vec> &sigma,
                        const std::vector<Vec> &u);

inline IndicatorField estimate(const Mesh &mesh, const DofMap &dofs, const EigenCluster &cluster)
{
  return estimate(mesh, dofs, cluster.sigma, cluster.u);
}

// Sum of the total indicator over all members and the given elements.
double aggregate(const IndicatorField &field, const MarkSet &subset);
double aggregate(const IndicatorField &field);

// CSV: element,member,total,volume,curl,jump (member is the 1-based eigenvalue index).
void write_indicator_csv(std::ostream &out, const IndicatorField &field,
                         const std::vector<int> &member_indices);
IndicatorField read_indicator_csv(std::istream &in);

}  // namespace mafem
