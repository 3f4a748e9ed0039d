#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "tritok/checkpoint.hpp"
#include "tritok/error.hpp"
#include "tritok/image.hpp"
#include "tritok/nn.hpp"
#include "tritok/tensor.hpp"
#include "tritok/triplane.hpp"

using namespace tritok;
namespace fs = std::filesystem;

namespace {

TensorD random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1, bool grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = u(rng);
    return TensorD::from(std::move(s), std::move(v), grad);
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("tritok_test_" + name); }

}  // namespace

TEST_CASE("product rule and uniform softmax") {
    auto a = TensorD::from({1}, {2.0}, true), b = TensorD::from({1}, {3.0}, true);
    auto c = mul(a, b);
    CHECK(c.data()[0] == 6);
    c.backward();
    CHECK(a.grad()[0] == 3);
    CHECK(b.grad()[0] == 2);

    const auto s = softmax(TensorD::full({5}, 0.7));
    for (double v : s.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("matmul gradient against central differences") {
    Rng rng(1);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const auto r = grad_check<double>([&] { auto m = matmul(a, b); return sum(mul(m, m)); }, {a, b});
    CHECK(r.max_rel_error <= 1e-6);
}

TEST_CASE("grad_check examples") {
    auto theta = TensorD::from({2}, {1.0, 2.0}, true);
    auto f = [](const TensorD& t) { return sum(mul(t, t)); };
    CHECK(grad_check<double>(f, theta, 1e-6) < 1e-8);
    theta.zero_grad();
    f(theta).backward();
    CHECK(theta.grad()[0] == 2);
    CHECK(theta.grad()[1] == 4);

    auto k = TensorD::from({3}, {1, 2, 3}, true);
    const auto constant = [](const TensorD&) { return TensorD::scalar(4.0); };
    CHECK(grad_check<double>(constant, k, 1e-6) == 0);

    auto bad = TensorD::from({1}, {1.0}, true);
    CHECK_THROWS_AS(grad_check<double>([](const TensorD& t) { return sum(exp(scale(t, 1e6))); }, bad, 1e-6), Error);
}

TEST_CASE("every op agrees with central differences on random shapes") {
    Rng rng(2);
    std::uniform_int_distribution<std::size_t> dim(1, 4);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
        auto a = random_tensor({m, n}, rng), b = random_tensor({m, n}, rng), w = random_tensor({n, k}, rng);
        auto bias = random_tensor({k}, rng);
        auto f = [&] {
            auto x = add(matmul(relu(a), w), bias);
            auto y = concat<double>({sigmoid(x), softplus(x), softmax(x)}, 1);
            auto z = mul(sub(a, b), add(a, b));
            auto e = expand(mean_along_axis(reshape(z, {n, m}), 0), 0, 2);
            return add(add(sum(mul(y, y)), mean(abs(z))), add(sum(exp(scale(e, 0.5))), sum(sum_along_axis(narrow(y, 1, 0, k), 0))));
        };
        const auto r = grad_check<double>(f, {a, b, w, bias});
        CHECK(r.max_rel_error <= 1e-5);
    }
}

TEST_CASE("backward accumulates and is linear") {
    Rng rng(3);
    auto x = random_tensor({4}, rng);
    auto f = [&] { return sum(mul(x, x)); };
    auto g = [&] { return sum(scale(x, 3.0)); };
    add(f(), g()).backward();
    std::vector<double> both(x.grad().begin(), x.grad().end());
    x.zero_grad();
    f().backward();
    g().backward();
    for (std::size_t i = 0; i < 4; ++i) CHECK(both[i] == doctest::Approx(x.grad()[i]).epsilon(1e-15));

    // Shared use: y = x * x uses x twice.
    auto s = TensorD::from({1}, {5.0}, true);
    mul(s, s).backward();
    CHECK(s.grad()[0] == 10);
}

TEST_CASE("reshape and concat round trips are bit-exact") {
    Rng rng(4);
    const auto a = random_tensor({2, 3, 4}, rng, -1, 1, false), b = random_tensor({2, 5, 4}, rng, -1, 1, false);
    CHECK(fixtures::bit_equal(reshape(reshape(a, {6, 4}), {2, 3, 4}), a));
    const auto c = concat<double>({a, b}, 1);
    CHECK(fixtures::bit_equal(narrow(c, 1, 0, 3), a));
    CHECK(fixtures::bit_equal(narrow(c, 1, 3, 5), b));
}

TEST_CASE("shape errors name the op and both shapes") {
    const auto a = TensorD::zeros({2, 3}), b = TensorD::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kShape);
        const std::string m = e.what();
        CHECK(m.find("matmul") != std::string::npos);
        CHECK(m.find("[2,3]") != std::string::npos);
        CHECK(m.find("[4,2]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, TensorD::zeros({3, 2})), Error);
}

TEST_CASE("no-grad guard records no graph") {
    auto x = TensorD::from({2}, {1, 2}, true);
    {
        NoGradGuard guard;
        CHECK_FALSE(mul(x, x).requires_grad());
    }
    CHECK(mul(x, x).requires_grad());
}

TEST_CASE("derived random streams") {
    Rng a = derive_rng(7, "batch", 3), b = derive_rng(7, "batch", 3), c = derive_rng(7, "batch", 4);
    const auto va = a(), vb = b(), vc = c();
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(derive_rng(7, "scene")() != derive_rng(7, "model")());
}

TEST_CASE("adam uses group learning rates and cosine decay") {
    ParamStore<double> store;
    auto a = store.add("plane.a", TensorD::from({1}, {1.0}, true));
    auto b = store.add("decoder.b", TensorD::from({1}, {1.0}, true));
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam<double> adam(cfg);
    adam.set_group_lr("plane.", 0.5);
    add(sum(a), sum(b)).backward();
    adam.step(store);
    // The first step moves each parameter by its learning rate.
    CHECK(store.get("plane.a").data()[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(store.get("decoder.b").data()[0] == doctest::Approx(0.9).epsilon(1e-6));

    cfg.total_steps = 10;
    Adam<double> decayed(cfg);
    double prev = decayed.lr_scale();
    CHECK(prev == 1);
    for (int i = 0; i < 10; ++i) {
        store.zero_grad();
        add(sum(a), sum(b)).backward();
        decayed.step(store);
        CHECK(decayed.lr_scale() <= prev);
        prev = decayed.lr_scale();
    }
    CHECK(prev == doctest::Approx(cfg.final_lr_fraction));
}

TEST_CASE("checkpoint round trip and format") {
    Rng rng(5);
    ParamStore<float> store;
    store.add("plane.xy", normal_init<float>({2, 3, 4}, 0.0f, 1.0f, rng));
    store.add("decoder.l0.bias", normal_init<float>({5}, 0.0f, 1.0f, rng));
    const fs::path p = temp_path("ckpt.tpln");
    write_checkpoint(p, export_params(store));

    std::ifstream is(p, std::ios::binary);
    char magic[4];
    std::uint32_t version = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&version), 4);
    CHECK(std::string(magic, 4) == "TPLN");
    CHECK(version == kCheckpointVersion);

    ParamStore<float> other;
    other.add("plane.xy", Tensor<float>::zeros({2, 3, 4}, true));
    other.add("decoder.l0.bias", Tensor<float>::zeros({5}, true));
    import_params(other, read_checkpoint(p));
    CHECK(fixtures::bit_equal(other.get("plane.xy"), store.get("plane.xy")));
    CHECK(fixtures::bit_equal(other.get("decoder.l0.bias"), store.get("decoder.l0.bias")));

    ParamStore<float> extra;
    extra.add("plane.yz", Tensor<float>::zeros({1}, true));
    CHECK_THROWS_AS(import_params(extra, read_checkpoint(p)), Error);

    std::ofstream(temp_path("bad.tpln"), std::ios::binary) << "NOPE";
    CHECK_THROWS_AS(read_checkpoint(temp_path("bad.tpln")), Error);
    fs::remove(p);
    fs::remove(temp_path("bad.tpln"));
}

TEST_CASE("image file round trips") {
    Image rgb(3, 5, 3), depth(4, 2, 1);
    for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<float>(i % 256) / 255.0f;
    for (std::size_t i = 0; i < depth.data.size(); ++i) depth.data[i] = 0.25f * static_cast<float>(i) - 1.0f;
    for (const char* ext : {"png", "ppm"}) {
        const fs::path p = temp_path(std::string("img.") + ext);
        if (std::string(ext) == "png")
            write_png(p, rgb);
        else
            write_ppm(p, rgb);
        const Image back = std::string(ext) == "png" ? read_png(p) : read_ppm(p);
        REQUIRE(back.same_shape(rgb));
        for (std::size_t i = 0; i < rgb.data.size(); ++i) CHECK(back.data[i] == rgb.data[i]);
        fs::remove(p);
    }
    const fs::path p = temp_path("depth.pfm");
    write_pfm(p, depth);
    const Image back = read_pfm(p);
    REQUIRE(back.same_shape(depth));
    CHECK(back.data == depth.data);
    fs::remove(p);
}

TEST_CASE("bilinear plane sampling") {
    Rng rng(6);
    const auto plane = random_tensor({4, 5, 3}, rng, -1, 1, false);
    const std::vector<double> node{2, 3}, mid{1.5, 2.5};
    const auto at_node = sample_plane(plane, node);
    const auto at_mid = sample_plane(plane, mid);
    const auto p = plane.data();
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(at_node.data()[c] == p[(2 * 5 + 3) * 3 + c]);
        const double avg = (p[(1 * 5 + 2) * 3 + c] + p[(1 * 5 + 3) * 3 + c] + p[(2 * 5 + 2) * 3 + c] + p[(2 * 5 + 3) * 3 + c]) / 4;
        CHECK(at_mid.data()[c] == doctest::Approx(avg).epsilon(1e-14));
    }
    const std::vector<double> outside{-3, 9};
    const auto clamped = sample_plane(plane, outside);
    for (std::size_t c = 0; c < 3; ++c) CHECK(clamped.data()[c] == p[(0 * 5 + 4) * 3 + c]);
}

TEST_CASE("triplane query aggregation") {
    const GridWarp w = fixtures::micro_warp();
    Rng rng(7);
    ParamStore<double> store;
    auto tp = Triplane<double>::create(store, w, 3, 0.5, rng);
    std::uniform_real_distribution<double> u(-2.5, 2.5), uz(-0.9, 1.9);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({u(rng), u(rng), uz(rng)});

    const auto base = query_points(tp, pts);
    auto ones = tp;
    ones.xy = TensorD::full(tp.xy.shape(), 1.0);
    const auto f1 = query_points(ones, pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto c = plane_coords(w, pts[i]);
        const std::vector<double> cxz{c[2], c[3]}, cyz{c[4], c[5]};
        const auto a = sample_plane(tp.xz, cxz), b = sample_plane(tp.yz, cyz);
        for (std::size_t d = 0; d < 3; ++d) CHECK(f1.features.data()[i * 3 + d] == a.data()[d] * b.data()[d]);
    }
    auto zero = tp;
    zero.yz = TensorD::zeros(tp.yz.shape());
    const auto zq = query_points(zero, pts);
    for (double v : zq.features.data()) CHECK(v == 0);

    auto scaled_tp = tp;
    scaled_tp.xy = scale(tp.xy, 2.5);
    const auto fs = query_points(scaled_tp, pts);
    for (std::size_t i = 0; i < base.features.size(); ++i)
        CHECK(fs.features.data()[i] == doctest::Approx(2.5 * base.features.data()[i]).epsilon(1e-14));

    const std::vector<Vec3> far{{50, 0, 0}};
    CHECK(query_points(tp, far).inside[0] == 0);

    const auto r = grad_check<double>([&] { return sum(mul(query_points(tp, pts).features, query_points(tp, pts).features)); },
                                      {tp.xy, tp.xz, tp.yz});
    CHECK(r.max_rel_error <= 1e-5);
}

TEST_CASE("decoder output ranges and gradients") {
    Rng rng(8);
    ParamStore<double> store;
    const auto dec = DecoderMLP<double>::create(store, 6, 16, rng);
    const auto x = random_tensor({10000, 6}, rng, -5, 5, false);
    const auto out = dec(x);
    for (double s : out.sigma.data()) CHECK(s >= 0);
    bool in_range = true;
    for (double c : out.rgb.data()) in_range = in_range && c >= 0 && c <= 1;
    CHECK(in_range);

    auto small = random_tensor({5, 6}, rng);
    const auto r = grad_check<double>(
        [&] {
            const auto o = dec(small);
            return add(sum(mul(o.rgb, o.rgb)), sum(o.sigma));
        },
        {small, dec.l0.weight, dec.l1.weight, dec.l2.weight, dec.l2.bias});
    CHECK(r.max_rel_error <= 1e-5);
}

TEST_CASE("triplane validation") {
    const GridWarp w = fixtures::micro_warp();
    auto tp = Triplane<double>::filled(w, 2, 1.0);
    CHECK_NOTHROW(tp.validate());
    tp.xz.mutable_data()[0] = NAN;
    CHECK_THROWS_AS(tp.validate(), Error);
    tp = Triplane<double>::filled(w, 2, 1.0);
    tp.yz = TensorD::zeros({3, 4, 2});
    CHECK_THROWS_AS(tp.validate(), Error);
}
