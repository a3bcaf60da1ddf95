#include "ihp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ihp {

namespace {

constexpr int kNeighbourRows[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
constexpr int kNeighbourCols[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas rooted at finite entries of f, written to out.
// v, z are scratch of size n and n + 1.
void envelope_1d(const double* f, std::size_t stride_f, double* out, std::size_t stride_out, int n,
                 std::vector<int>& v, std::vector<double>& z) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride_f];
    if (!std::isfinite(fq)) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[k];
      s = ((fq + double(q) * q) - (f[p * stride_f] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) out[q * stride_out] = kInf;
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q * stride_out] = d * d + f[v[k] * stride_f];
  }
}

}  // namespace

LabelMask::LabelMask(int height, int width, int num_classes, std::uint8_t fill)
    : LabelMask(height, width, num_classes,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0), fill)) {}

LabelMask::LabelMask(int height, int width, int num_classes, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
  if (height < 1 || width < 1) fail(ErrorKind::invalid_argument, "mask dimensions must be positive");
  if (num_classes < 1 || num_classes > 256) fail(ErrorKind::invalid_argument, "num_classes out of range");
  if (labels_.size() != static_cast<std::size_t>(height) * width)
    fail(ErrorKind::invalid_argument, "label buffer size does not match mask shape");
  for (auto l : labels_)
    if (l >= num_classes) fail(ErrorKind::invalid_argument, "label value out of range");
}

void LabelMask::set(int row, int col, std::uint8_t label) {
  if (label >= num_classes_) fail(ErrorKind::invalid_argument, "label value out of range");
  labels_[index(row, col)] = label;
}

std::vector<PartComponent> connected_components(int height, int width, std::span<const std::uint8_t> inside,
                                                int class_id) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<int> label(n, -1);
  std::vector<PartComponent> out;
  std::vector<Pixel> stack;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * width + c;
      if (!inside[i] || label[i] >= 0) continue;
      const int id = static_cast<int>(out.size());
      PartComponent comp;
      comp.class_id = class_id;
      label[i] = id;
      stack.assign(1, Pixel{r, c});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        comp.pixels.push_back(p);
        for (int k = 0; k < 8; ++k) {
          const int rr = p.row + kNeighbourRows[k];
          const int cc = p.col + kNeighbourCols[k];
          if (rr < 0 || cc < 0 || rr >= height || cc >= width) continue;
          const std::size_t j = static_cast<std::size_t>(rr) * width + cc;
          if (inside[j] && label[j] < 0) {
            label[j] = id;
            stack.push_back(Pixel{rr, cc});
          }
        }
      }
      std::sort(comp.pixels.begin(), comp.pixels.end());
      for (const Pixel& p : comp.pixels) {
        for (int k = 0; k < 8; ++k) {
          const int rr = p.row + kNeighbourRows[k];
          const int cc = p.col + kNeighbourCols[k];
          if (rr < 0 || cc < 0 || rr >= height || cc >= width ||
              label[static_cast<std::size_t>(rr) * width + cc] != id) {
            comp.boundary.push_back(p);
            break;
          }
        }
      }
      out.push_back(std::move(comp));
    }
  }
  // Discovery order is already by minimal pixel.
  std::stable_sort(out.begin(), out.end(),
                   [](const PartComponent& a, const PartComponent& b) { return a.area() > b.area(); });
  return out;
}

std::vector<PartComponent> connected_components(const LabelMask& mask, int class_id) {
  if (class_id < 0 || class_id >= mask.num_classes()) fail(ErrorKind::invalid_argument, "class id out of range");
  std::vector<std::uint8_t> inside(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) inside[i] = mask[i] == class_id;
  return connected_components(mask.height(), mask.width(), inside, class_id);
}

std::vector<Pixel> inner_boundary(int height, int width, std::span<const Pixel> pixels) {
  std::vector<std::uint8_t> member(static_cast<std::size_t>(height) * width, 0);
  for (const Pixel& p : pixels) member[static_cast<std::size_t>(p.row) * width + p.col] = 1;
  std::vector<Pixel> out;
  for (const Pixel& p : pixels) {
    for (int k = 0; k < 8; ++k) {
      const int rr = p.row + kNeighbourRows[k];
      const int cc = p.col + kNeighbourCols[k];
      if (rr < 0 || cc < 0 || rr >= height || cc >= width || !member[static_cast<std::size_t>(rr) * width + cc]) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> source) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> f(n), cols(n), out(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = source[i] ? 0.0 : kInf;

#pragma omp parallel
  {
    std::vector<int> v(std::max(height, width));
    std::vector<double> z(std::max(height, width) + 1);
#pragma omp for schedule(static)
    for (int c = 0; c < width; ++c)
      envelope_1d(f.data() + c, width, cols.data() + c, width, height, v, z);
#pragma omp for schedule(static)
    for (int r = 0; r < height; ++r)
      envelope_1d(cols.data() + static_cast<std::size_t>(r) * width, 1,
                  out.data() + static_cast<std::size_t>(r) * width, 1, width, v, z);
  }
  return out;
}

namespace reference {

std::vector<double> squared_distance_transform(int height, int width, std::span<const std::uint8_t> source) {
  std::vector<Pixel> seeds;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (source[static_cast<std::size_t>(r) * width + c]) seeds.push_back({r, c});
  std::vector<double> out(static_cast<std::size_t>(height) * width, kInf);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double& best = out[static_cast<std::size_t>(r) * width + c];
      for (const Pixel& s : seeds) {
        const double dr = r - s.row, dc = c - s.col;
        best = std::min(best, dr * dr + dc * dc);
      }
    }
  return out;
}

}  // namespace reference

DistanceField distance_to_set(int height, int width, std::span<const Pixel> source) {
  if (source.empty()) fail(ErrorKind::invalid_argument, "empty source set");
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(height) * width, 0);
  for (const Pixel& p : source) {
    if (p.row < 0 || p.col < 0 || p.row >= height || p.col >= width)
      fail(ErrorKind::invalid_argument, "source pixel outside grid");
    flags[static_cast<std::size_t>(p.row) * width + p.col] = 1;
  }
  DistanceField field{height, width, squared_distance_transform(height, width, flags)};
  for (double& d : field.values) d = std::sqrt(d);
  return field;
}

AdjacencyPairs part_adjacency(const LabelMask& mask) {
  AdjacencyPairs pairs;
  const int h = mask.height();
  const int w = mask.width();
  // Forward half of the 8-neighbourhood covers every unordered pixel pair once.
  constexpr int dr[4] = {0, 1, 1, 1};
  constexpr int dc[4] = {1, -1, 0, 1};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int a = mask.at(r, c);
      for (int k = 0; k < 4; ++k) {
        const int rr = r + dr[k];
        const int cc = c + dc[k];
        if (rr >= h || cc < 0 || cc >= w) continue;
        const int b = mask.at(rr, cc);
        if (a != b) pairs.emplace(std::min(a, b), std::max(a, b));
      }
    }
  }
  return pairs;
}

std::vector<std::uint8_t> part_boundary_union(const LabelMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int a = mask.at(r, c);
      if (a == 0) continue;
      for (int k = 0; k < 8; ++k) {
        const int rr = r + kNeighbourRows[k];
        const int cc = c + kNeighbourCols[k];
        if (!mask.in_bounds(rr, cc) || mask.at(rr, cc) != a) {
          out[mask.index(r, c)] = 1;
          break;
        }
      }
    }
  }
  return out;
}

double min_distance(Pixel p, std::span<const Pixel> set) {
  if (set.empty()) return kInf;
  long best = std::numeric_limits<long>::max();
  for (const Pixel& q : set) {
    const long dr = p.row - q.row;
    const long dc = p.col - q.col;
    best = std::min(best, dr * dr + dc * dc);
  }
  return std::sqrt(static_cast<double>(best));
}

}  // namespace ihp
