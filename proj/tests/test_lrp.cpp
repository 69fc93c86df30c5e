#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "relex/errors.hpp"
#include "relex/lrp.hpp"
#include "relex/metric.hpp"
#include "relex/network.hpp"

using namespace relex;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, std::mt19937_64& rng,
                     double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

// Explicitly unroll a convolution into its dense matrix [out_cells, in_cells].
Tensor unroll_conv(const Tensor& kernels, const std::vector<std::size_t>& in_shape,
                   std::size_t stride, std::size_t pad) {
    const std::size_t c_in = in_shape[0], h = in_shape[1], w = in_shape[2];
    const std::size_t c_out = kernels.extent(0), kh = kernels.extent(2), kw = kernels.extent(3);
    const std::size_t out_h = (h + 2 * pad - kh) / stride + 1;
    const std::size_t out_w = (w + 2 * pad - kw) / stride + 1;
    Tensor m({c_out * out_h * out_w, c_in * h * w});
    for (std::size_t oc = 0; oc < c_out; ++oc)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const std::size_t row = (oc * out_h + oy) * out_w + ox;
                for (std::size_t ic = 0; ic < c_in; ++ic)
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const long iy = static_cast<long>(oy * stride + ky) -
                                            static_cast<long>(pad);
                            const long ix = static_cast<long>(ox * stride + kx) -
                                            static_cast<long>(pad);
                            if (iy < 0 || iy >= static_cast<long>(h) || ix < 0 ||
                                ix >= static_cast<long>(w))
                                continue;
                            m.at(row, (ic * h + iy) * w + ix) =
                                kernels[((oc * c_in + ic) * kh + ky) * kw + kx];
                        }
            }
    return m;
}

LayerStack bias_free_stack(std::uint64_t seed) {
    return init_stack({LayerSpec::conv(1, 2, 3, 1, 1, false), LayerSpec::relu(),
                       LayerSpec::maxpool(2, 2), LayerSpec::flatten(),
                       LayerSpec::dense(2 * 3 * 3, 4, false)},
                      {1, 6, 6}, seed);
}

}  // namespace

TEST_CASE("lrp_dense proportional shares and zero input") {
    const Tensor input({2}, {2.0, 1.0});
    const Tensor weights({1, 2}, {1.0, 1.0});
    const Tensor r_out({1}, {3.0});
    const Tensor r_in = lrp_dense(r_out, input, weights, 0.0);
    CHECK(r_in[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(r_in[1] == doctest::Approx(1.0).epsilon(1e-14));

    const Tensor zero({2}, {0.0, 0.0});
    const Tensor r_zero = lrp_dense(r_out, zero, weights, 0.01);
    CHECK(r_zero[0] == 0.0);
    CHECK(r_zero[1] == 0.0);
}

TEST_CASE("lrp_dense conserves relevance at epsilon 0") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor input = random_tensor({6}, rng);
        const Tensor weights = random_tensor({4, 6}, rng);
        const Tensor r_out = random_tensor({4}, rng);
        const Tensor r_in = lrp_dense(r_out, input, weights, 0.0);
        CHECK(std::abs(r_in.sum() - r_out.sum()) <= 1e-10 * std::max(1.0, std::abs(r_out.sum())));
    }
}

TEST_CASE("lrp_conv identity kernel passes relevance through") {
    const Tensor input({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor kernel({1, 1, 1, 1}, {1.0});
    std::mt19937_64 rng(6);
    const Tensor r_out = random_tensor({1, 3, 3}, rng);
    const Tensor r_in = lrp_conv(r_out, input, kernel, 1, 0, 0.0);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(std::abs(r_in[i] - r_out[i]) <= 1e-12 * std::max(1.0, std::abs(r_out[i])));
    }
}

TEST_CASE("lrp_conv equals lrp_dense on the unrolled matrix") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        std::uniform_int_distribution<std::size_t> chan(1, 3);
        const std::size_t c_in = chan(rng), c_out = chan(rng);
        const Tensor input = random_tensor({c_in, 5, 5}, rng);
        const Tensor kernels = random_tensor({c_out, c_in, 3, 3}, rng);
        const Tensor out = conv2d(input, kernels, 1, 1);
        const Tensor r_out = random_tensor(out.shape(), rng);

        const Tensor via_conv = lrp_conv(r_out, input, kernels, 1, 1, 1e-3);

        const Tensor m = unroll_conv(kernels, input.shape(), 1, 1);
        const Tensor flat_in({input.size()},
                             std::vector<double>(input.data(), input.data() + input.size()));
        const Tensor flat_r({r_out.size()},
                            std::vector<double>(r_out.data(), r_out.data() + r_out.size()));
        const Tensor via_dense = lrp_dense(flat_r, flat_in, m, 1e-3);

        for (std::size_t i = 0; i < via_conv.size(); ++i) {
            CHECK(std::abs(via_conv[i] - via_dense[i]) <=
                  1e-10 * std::max(1.0, std::abs(via_dense[i])));
        }
    }
}

TEST_CASE("lrp_maxpool winner-take-all and exact conservation") {
    // 2x2 window with winner planted at (1,1)
    const Tensor input({1, 2, 2}, {0.0, 0.0, 0.0, 9.0});
    const MaxPoolResult pool = maxpool2d(input, 2, 2);
    const Tensor r_out({1, 1, 1}, {5.0});
    const Tensor r_in = lrp_maxpool(r_out, pool.argmax, input.shape());
    CHECK(r_in[0] == 0.0);
    CHECK(r_in[1] == 0.0);
    CHECK(r_in[2] == 0.0);
    CHECK(r_in[3] == 5.0);

    std::mt19937_64 rng(8);
    const Tensor big = random_tensor({2, 4, 4}, rng);
    const MaxPoolResult pool2 = maxpool2d(big, 2, 2);
    const Tensor r2 = random_tensor(pool2.output.shape(), rng);
    const Tensor back = lrp_maxpool(r2, pool2.argmax, big.shape());
    CHECK(back.sum() == doctest::Approx(r2.sum()).epsilon(1e-15));
}

TEST_CASE("lrp_relu gates negative pre-activations") {
    const Tensor input({4}, {1.0, -1.0, 0.0, 2.0});
    const Tensor r_out({4}, {5.0, 5.0, 5.0, 5.0});
    const Tensor r_in = lrp_relu(r_out, input);
    CHECK(r_in[0] == 5.0);
    CHECK(r_in[1] == 0.0);
    CHECK(r_in[2] == 0.0);
    CHECK(r_in[3] == 5.0);
}

TEST_CASE("distance head closed form K=1") {
    // M = [1], xi = [3], xj = [1]: delta = 2, d = 4, single z bucket.
    const Tensor factor({1, 1}, {1.0});
    const Tensor xi({1}, {3.0});
    const Tensor xj({1}, {1.0});
    const auto [r_xi, r_xj] = lrp_distance_head(factor, xi, xj, 1.0, 0.0);
    CHECK(r_xi[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r_xj[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("distance head conserves at epsilon 0") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        const Tensor factor = random_tensor({3, 6}, rng);
        const Tensor xi = random_tensor({6}, rng);
        const Tensor xj = random_tensor({6}, rng);
        const double r_total = 0.73;
        const auto [r_xi, r_xj] = lrp_distance_head(factor, xi, xj, r_total, 0.0);
        CHECK(std::abs(r_xi.sum() + r_xj.sum() - r_total) <= 1e-10);
    }
}

TEST_CASE("explain_pair symmetry on identical images") {
    std::mt19937_64 rng(10);
    const LayerStack stack = bias_free_stack(41);
    const Tensor image = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};
    const HeatmapPair pair = explain_pair(stack, metric, 0.3, image, image, 0.0);
    CHECK(pair.prediction == doctest::Approx(link_probability(0.0, 0.3)).epsilon(1e-12));
    CHECK(std::abs(pair.left.sum() - pair.right.sum()) <= 1e-9);
}

TEST_CASE("explain_pair end-to-end conservation on bias-free stack") {
    std::mt19937_64 rng(11);
    const LayerStack stack = bias_free_stack(43);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        const Tensor b = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        const HeatmapPair pair = explain_pair(stack, metric, 0.5, a, b, 0.0);
        const double total = pair.left.sum() + pair.right.sum();
        CHECK(std::abs(total - pair.prediction) <=
              1e-8 * std::max(1.0, std::abs(pair.prediction)));
    }
}

TEST_CASE("relevance trace conserves per layer at epsilon 0") {
    std::mt19937_64 rng(12);
    const LayerStack stack = bias_free_stack(47);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};
    const Tensor a = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const Tensor b = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const RelevanceTrace trace = relevance_trace(stack, metric, 0.5, a, b, 0.0);
    const double head_sum = trace.left.features.sum() + trace.right.features.sum();
    CHECK(std::abs(head_sum - trace.prediction) <= 1e-8 * std::max(1.0, trace.prediction));
    for (const BranchRelevance* branch : {&trace.left, &trace.right}) {
        const double top = branch->features.sum();
        for (const Tensor& layer : branch->layers) {
            CHECK(std::abs(layer.sum() - top) <= 1e-8 * std::max(1.0, std::abs(top)));
        }
    }
}

TEST_CASE("epsilon deficit is non-decreasing") {
    std::mt19937_64 rng(13);
    const LayerStack stack = bias_free_stack(53);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor a = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        const Tensor b = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        double prev = -1.0;
        for (double eps : {0.0, 1e-3, 1e-2, 1e-1}) {
            const HeatmapPair pair = explain_pair(stack, metric, 0.5, a, b, eps);
            const double deficit = std::abs(pair.prediction - pair.left.sum() - pair.right.sum());
            CHECK(deficit >= prev - 1e-12);
            prev = deficit;
        }
    }
}

TEST_CASE("explain_pair determinism and complete pixel ranking") {
    std::mt19937_64 rng(14);
    const LayerStack stack = bias_free_stack(59);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};
    const Tensor a = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const Tensor b = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
    const HeatmapPair p1 = explain_pair(stack, metric, 0.5, a, b, 1e-3);
    const HeatmapPair p2 = explain_pair(stack, metric, 0.5, a, b, 1e-3);
    for (std::size_t i = 0; i < p1.left.size(); ++i) CHECK(p1.left[i] == p2.left[i]);
    for (std::size_t i = 0; i < p1.right.size(); ++i) CHECK(p1.right[i] == p2.right[i]);
    CHECK(p1.ranking.size() == 2 * 36);
    std::set<std::tuple<int, std::size_t, std::size_t>> seen;
    for (const PixelRef& ref : p1.ranking) seen.insert({ref.branch, ref.y, ref.x});
    CHECK(seen.size() == 2 * 36);
}

TEST_CASE("heatmap mass tracks a translated patch on a linear conv net") {
    // Pure 3x3 conv (no relu/pool) then flatten+dense of ones: a linear map,
    // so relevance should concentrate where the bright patch sits.
    LayerStack stack = init_stack({LayerSpec::conv(1, 1, 3, 1, 1, false), LayerSpec::flatten(),
                                   LayerSpec::dense(36, 4, false)},
                                  {1, 6, 6}, 61);
    std::mt19937_64 rng(15);
    const UserMetric metric{"u", random_tensor({4, 4}, rng)};

    const auto center_of_mass = [](const Tensor& map) {
        double my = 0.0, mx = 0.0, total = 0.0;
        for (std::size_t y = 0; y < map.extent(0); ++y)
            for (std::size_t x = 0; x < map.extent(1); ++x) {
                const double v = std::abs(map.at(y, x));
                my += v * static_cast<double>(y);
                mx += v * static_cast<double>(x);
                total += v;
            }
        return std::pair<double, double>{my / total, mx / total};
    };

    const auto patch_image = [](std::size_t oy, std::size_t ox) {
        Tensor img({1, 6, 6});
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) img.at(0, oy + y, ox + x) = 1.0;
        return img;
    };
    const Tensor other = patch_image(2, 2);
    const auto [y1, x1] = center_of_mass(
        explain_pair(stack, metric, 0.5, patch_image(0, 0), other, 1e-6).left);
    const auto [y2, x2] = center_of_mass(
        explain_pair(stack, metric, 0.5, patch_image(3, 3), other, 1e-6).left);
    // the patch moved +3,+3; the relevance mass should move along with it
    CHECK(std::abs((y2 - y1) - 3.0) <= 1.0);
    CHECK(std::abs((x2 - x1) - 3.0) <= 1.0);
}

TEST_CASE("heatmap exports") {
    namespace fs = std::filesystem;
    std::mt19937_64 rng(16);
    const Tensor map = random_tensor({4, 4}, rng);
    const fs::path dir = fs::temp_directory_path() / "relex_lrp_export";
    fs::create_directories(dir);

    const std::string csv = (dir / "map.csv").string();
    write_heatmap_csv(map, csv);
    std::ifstream in(csv);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);

    const std::string pgm = (dir / "map.pgm").string();
    write_heatmap_pgm(map, pgm);
    CHECK(fs::exists(pgm));
    CHECK(fs::exists(pgm + ".json"));

    Tensor image({1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) image[i] = static_cast<double>(i) / 16.0;
    const std::string ppm = (dir / "overlay.ppm").string();
    write_heatmap_overlay_ppm(map, image, ppm);
    CHECK(fs::exists(ppm));
    fs::remove_all(dir);
}
