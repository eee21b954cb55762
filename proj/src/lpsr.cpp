// SPDX-License-Identifier: Apache-2.0
#include "gevs/lpsr.hpp"

#include <algorithm>
#include <numeric>

namespace gevs {

namespace {

void require_same_shape(const Image& pred, const SparseReference& ref) {
    if (pred.width != ref.reference.width || pred.height != ref.reference.height ||
        pred.width != ref.mask.width || pred.height != ref.mask.height)
        throw std::invalid_argument("lpsr: prediction/reference shape mismatch");
}

void require_nonempty(const SparseReference& ref) {
    if (ref.valid_count() == 0)
        throw std::invalid_argument("lpsr: empty valid pixel set");
}

double luma(const Image& img, int x, int y) {
    return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

}  // namespace

void EvalRecord::check_invariants() const {
    if (!(valid_fraction > 0.0 && valid_fraction <= 1.0))
        throw std::logic_error("EvalRecord: valid_fraction outside (0,1]");
    // Constant-diff instances sit exactly on the Jensen equality boundary;
    // allow for the last-ulp rounding of the two accumulations there.
    if (!(s_rmse >= s_mae - 1e-12 && s_mae >= 0.0))
        throw std::logic_error("EvalRecord: rmse >= mae >= 0 violated");
}

double masked_mse(const Image& pred, const SparseReference& ref) {
    require_same_shape(pred, ref);
    require_nonempty(ref);
    double sum = 0.0;
    size_t n = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (!ref.mask.at(x, y)) continue;
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(x, y, c) - ref.reference.at(x, y, c);
                d2 += d * d;
            }
            sum += d2 / 3.0;
            ++n;
        }
    return sum / static_cast<double>(n);
}

double s_psnr(const Image& pred, const SparseReference& ref) {
    const double mse = masked_mse(pred, ref);
    if (mse == 0.0) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);  // MAX = 1 for [0,1] images
}

std::pair<double, double> s_mae_rmse(const Image& pred, const SparseReference& ref) {
    require_same_shape(pred, ref);
    require_nonempty(ref);
    double abs_sum = 0.0, sq_sum = 0.0;
    size_t n = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (!ref.mask.at(x, y)) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = pred.at(x, y, c) - ref.reference.at(x, y, c);
                abs_sum += std::abs(d);
                sq_sum += d * d;
            }
            n += 3;
        }
    const double mae = abs_sum / static_cast<double>(n);
    const double rmse = std::sqrt(sq_sum / static_cast<double>(n));
    return {mae, rmse};
}

double s_ssim(const Image& pred, const SparseReference& ref) {
    require_same_shape(pred, ref);
    require_nonempty(ref);
    constexpr int kRadius = 5;  // 11x11 window
    constexpr double kSigma = 1.5;
    constexpr double kC1 = 0.01 * 0.01;  // (k1 L)^2, L = 1
    constexpr double kC2 = 0.03 * 0.03;
    constexpr double kMinValidWeight = 0.5;

    // Normalized 11x11 Gaussian kernel.
    double kernel[2 * kRadius + 1][2 * kRadius + 1];
    double ksum = 0.0;
    for (int dy = -kRadius; dy <= kRadius; ++dy)
        for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            kernel[dy + kRadius][dx + kRadius] = w;
            ksum += w;
        }
    for (auto& row : kernel)
        for (auto& w : row) w /= ksum;

    double score_sum = 0.0;
    size_t included = 0;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x) {
            if (!ref.mask.at(x, y)) continue;
            double wsum = 0.0, mx = 0.0, my = 0.0;
            for (int dy = -kRadius; dy <= kRadius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= pred.height) continue;
                for (int dx = -kRadius; dx <= kRadius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= pred.width) continue;
                    if (!ref.mask.at(xx, yy)) continue;
                    const double w = kernel[dy + kRadius][dx + kRadius];
                    wsum += w;
                    mx += w * luma(pred, xx, yy);
                    my += w * luma(ref.reference, xx, yy);
                }
            }
            if (wsum < kMinValidWeight) continue;
            mx /= wsum;
            my /= wsum;
            double vx = 0.0, vy = 0.0, cxy = 0.0;
            for (int dy = -kRadius; dy <= kRadius; ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= pred.height) continue;
                for (int dx = -kRadius; dx <= kRadius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= pred.width) continue;
                    if (!ref.mask.at(xx, yy)) continue;
                    const double w = kernel[dy + kRadius][dx + kRadius] / wsum;
                    const double ex = luma(pred, xx, yy) - mx;
                    const double ey = luma(ref.reference, xx, yy) - my;
                    vx += w * ex * ex;
                    vy += w * ey * ey;
                    cxy += w * ex * ey;
                }
            }
            const double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
            const double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
            score_sum += num / den;
            ++included;
        }
    if (included == 0)
        throw std::invalid_argument("s_ssim: every window fell below the valid-weight threshold");
    return score_sum / static_cast<double>(included);
}

SparseReference make_sparse_reference(const RenderedView& truth, double subsample_fraction,
                                      std::uint64_t seed) {
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
        throw std::invalid_argument("make_sparse_reference: fraction must be in (0,1]");
    std::vector<size_t> candidates;
    const size_t npix = truth.rgb.pixel_count();
    candidates.reserve(npix);
    for (size_t i = 0; i < npix; ++i)
        if (std::isfinite(truth.depth.data[i])) candidates.push_back(i);
    if (candidates.empty())
        throw std::invalid_argument("make_sparse_reference: view has no finite-depth pixel");

    const size_t take = static_cast<size_t>(
        std::llround(subsample_fraction * static_cast<double>(candidates.size())));
    if (take == 0)
        throw std::invalid_argument("make_sparse_reference: fraction yields an empty valid set");

    // Partial Fisher-Yates over the candidate list.
    Rng rng(mix_seed(seed, 0x11da));
    for (size_t i = 0; i < take; ++i) {
        const size_t j = i + rng.uniform_index(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }

    SparseReference ref;
    ref.reference = Image(truth.rgb.width, truth.rgb.height, 0.0);
    ref.mask = Mask(truth.rgb.width, truth.rgb.height, 0);
    for (size_t i = 0; i < take; ++i) {
        const size_t pix = candidates[i];
        ref.mask.data[pix] = 1;
        for (int c = 0; c < 3; ++c)
            ref.reference.data[pix * 3 + c] = truth.rgb.data[pix * 3 + c];
    }
    return ref;
}

SparseReference reference_from_condition(const ConditionMap& cond) {
    return SparseReference{cond.rgb, cond.validity};
}

namespace {

struct BinAccum {
    double lo = 0, hi = 0;
    size_t count = 0;
    double psnr = 0, ssim = 0, mae = 0, rmse = 0, vf = 0;

    void add(const EvalRecord& r) {
        ++count;
        psnr += r.s_psnr;
        ssim += r.s_ssim;
        mae += r.s_mae;
        rmse += r.s_rmse;
        vf += r.valid_fraction;
    }
    BinAggregate finish() const {
        BinAggregate b;
        b.lo = lo;
        b.hi = hi;
        b.count = count;
        if (count > 0) {
            const double n = static_cast<double>(count);
            b.s_psnr = psnr / n;
            b.s_ssim = ssim / n;
            b.s_mae = mae / n;
            b.s_rmse = rmse / n;
            b.valid_fraction = vf / n;
        }
        return b;
    }
};

// Bin index for value v under half-open bins with a closed last bin;
// -1 means "outside all bins".
int bin_index(double v, const std::vector<double>& edges) {
    const int nbins = static_cast<int>(edges.size()) - 1;
    for (int i = 0; i < nbins; ++i) {
        const bool last = (i == nbins - 1);
        if (v >= edges[i] && (v < edges[i + 1] || (last && v == edges[i + 1]))) return i;
    }
    return -1;
}

void check_edges(const std::vector<double>& edges, const char* what) {
    if (edges.size() < 2)
        throw std::invalid_argument(std::string("bin_and_aggregate: need at least 2 ") + what + " edges");
    for (size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw std::invalid_argument(std::string("bin_and_aggregate: non-monotone ") + what + " edges");
}

}  // namespace

EvalReport bin_and_aggregate(const std::vector<EvalRecord>& records,
                             const std::vector<double>& offset_bin_edges,
                             const std::vector<double>& sparsity_bin_edges) {
    if (records.empty()) throw std::invalid_argument("bin_and_aggregate: no records");
    check_edges(offset_bin_edges, "offset");
    check_edges(sparsity_bin_edges, "sparsity");

    std::vector<BinAccum> off(offset_bin_edges.size() - 1);
    std::vector<BinAccum> spa(sparsity_bin_edges.size() - 1);
    for (size_t i = 0; i < off.size(); ++i) {
        off[i].lo = offset_bin_edges[i];
        off[i].hi = offset_bin_edges[i + 1];
    }
    for (size_t i = 0; i < spa.size(); ++i) {
        spa[i].lo = sparsity_bin_edges[i];
        spa[i].hi = sparsity_bin_edges[i + 1];
    }
    BinAccum off_other, spa_other;

    for (const auto& r : records) {
        r.check_invariants();
        const int oi = bin_index(r.pose_offset, offset_bin_edges);
        if (oi >= 0) off[oi].add(r); else off_other.add(r);
        const int si = bin_index(r.valid_fraction, sparsity_bin_edges);
        if (si >= 0) spa[si].add(r); else spa_other.add(r);
    }

    EvalReport report;
    report.records = records;
    for (const auto& b : off) report.by_offset.push_back(b.finish());
    for (const auto& b : spa) report.by_sparsity.push_back(b.finish());
    report.offset_other = off_other.finish();
    report.sparsity_other = spa_other.finish();
    return report;
}

}  // namespace gevs
