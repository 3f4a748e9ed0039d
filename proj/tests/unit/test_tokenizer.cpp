#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "tritok/error.hpp"
#include "tritok/tokenizer.hpp"

using namespace tritok;

namespace {

const std::array<std::size_t, 3> kDriving{96, 96, 48};

PatchConfig patches(std::size_t px, std::size_t py, std::size_t pz, bool half) {
    PatchConfig c;
    c.px = px;
    c.py = py;
    c.pz = pz;
    c.halfplane = half;
    return c;
}

}  // namespace

TEST_CASE("token counts on the driving grid") {
    CHECK(plane_token_counts(kDriving, patches(4, 6, 6, false)) == std::array<std::size_t, 3>{384, 192, 128});
    CHECK(token_count(kDriving, patches(4, 6, 6, false)) == 704);
    CHECK(plane_token_counts(kDriving, patches(4, 6, 6, true)) == std::array<std::size_t, 3>{192, 96, 128});
    CHECK(token_count(kDriving, patches(4, 6, 6, true)) == 416);
    CHECK(token_count(kDriving, patches(8, 8, 8, false)) == 288);
    CHECK(token_count(kDriving, patches(8, 8, 8, true)) == 180);
    CHECK(baseline_token_count(320, 512, 32, 1, 1) == 160);
    CHECK(baseline_token_count(320, 512, 32, 4, 6) == 3840);
    CHECK(baseline_token_count(64, 64, 64, 1, 1) == 1);
}

TEST_CASE("divisibility errors name the axis") {
    try {
        token_count(kDriving, patches(4, 7, 6, false));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kConfig);
        CHECK(std::string(e.what()).find("p_y") != std::string::npos);
    }
    // 96 / 2 = 48 is not divisible by 32.
    CHECK_THROWS_AS(token_count(kDriving, patches(32, 6, 6, true)), Error);
}

TEST_CASE("count law over random divisible configs") {
    Rng rng(17);
    const std::vector<std::size_t> divs{1, 2, 3, 4, 6};
    std::uniform_int_distribution<std::size_t> pick(0, divs.size() - 1), mult(1, 4);
    for (int trial = 0; trial < 200; ++trial) {
        PatchConfig c = patches(divs[pick(rng)], divs[pick(rng)], divs[pick(rng)], trial % 2 == 0);
        const std::array<std::size_t, 3> cells{2 * c.px * mult(rng), c.py * mult(rng), c.pz * mult(rng)};
        const std::size_t sx = c.halfplane ? cells[0] / 2 : cells[0];
        const std::size_t expect = sx * cells[1] / (c.px * c.py) + sx * cells[2] / (c.px * c.pz) +
                                   cells[1] * cells[2] / (c.py * c.pz);
        CHECK(token_count(cells, c) == expect);
        CHECK(token_provenance(cells, c).size() == expect);
    }
}

TEST_CASE("patchify round trip and loop oracle") {
    Rng rng(5);
    const auto plane = normal_init<double>({6, 8, 3}, 0.0, 1.0, rng);
    const auto p = patchify_plane(plane, 3, 2);
    REQUIRE(p.shape() == Shape{2, 4, 18});
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t u = 0; u < 3; ++u)
                for (std::size_t v = 0; v < 2; ++v)
                    for (std::size_t c = 0; c < 3; ++c)
                        CHECK(p.data()[(a * 4 + b) * 18 + (u * 2 + v) * 3 + c] ==
                              plane.data()[((a * 3 + u) * 8 + b * 2 + v) * 3 + c]);
    CHECK(fixtures::bit_equal(unpatchify_plane(p, 3, 2), plane));
    const auto id = patchify_plane(plane, 1, 1);
    CHECK(std::equal(id.data().begin(), id.data().end(), plane.data().begin()));
    CHECK_THROWS_AS(patchify_plane(plane, 4, 2), Error);
}

TEST_CASE("projection") {
    ParamStore<double> store;
    Rng rng(3);
    auto lin = Linear<double>::create(store, "p", 4, 4, rng);
    auto w = lin.weight.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
    const auto patches_t = normal_init<double>({2, 3, 4}, 0.0, 1.0, rng);
    const auto tok = project_tokens(patches_t, lin);
    CHECK(std::equal(tok.data().begin(), tok.data().end(), patches_t.data().begin()));
    auto b = lin.bias.mutable_data();
    b[2] = 0.5;
    const auto zero = project_tokens(Tensor<double>::zeros({2, 3, 4}), lin);
    for (std::size_t i = 0; i < 6; ++i) CHECK(zero.data()[i * 4 + 2] == 0.5);

    auto lin2 = Linear<double>::create(store, "q", 4, 3, rng);
    auto x = normal_init<double>({2, 2, 4}, 0.0, 1.0, rng);
    x.set_requires_grad(true);
    const auto res = grad_check<double>([&] { auto t = project_tokens(x, lin2); return sum(mul(t, t)); },
                                        {x, lin2.weight, lin2.bias});
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("tokenize order, provenance and halfplane content") {
    const GridWarp w{AxisWarp::symmetric(8, 2, 1.0, 2.0), AxisWarp::symmetric(4, 1, 1.0, 2.0),
                     AxisWarp::bottom_up(4, 2, 0.5, 1.0, -1.0)};
    ParamStore<double> store;
    Rng rng(9);
    auto tp = Triplane<double>::create(store, w, 2, 0.5, rng);
    PatchConfig cfg = patches(2, 2, 2, true);
    cfg.d_ar = 8;
    const auto proj = TokenProjector<double>::create(store, 2, cfg, rng);
    const auto seq = tokenize(tp, proj, cfg, true);
    CHECK(seq.length() == 4 + 4 + 4);
    CHECK(seq.tokens.shape() == Shape{12, 8});
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& p : seq.provenance) seen.insert({static_cast<int>(p.plane), static_cast<int>(p.row), static_cast<int>(p.col)});
    CHECK(seen.size() == 12);
    CHECK(seq.provenance[0] == TokenProvenance{PlaneId::kXY, 0, 0});
    CHECK(seq.provenance[4].plane == PlaneId::kXZ);
    // The first xy token only reads front-half cells (x index 4, 5).
    auto expect = project_tokens(patchify_plane(narrow(tp.xy, 0, 4, 4), 2, 2), proj.planes[0]);
    for (std::size_t i = 0; i < 8; ++i) CHECK(seq.tokens.data()[i] == expect.data()[i]);
    CHECK_THROWS_AS(tokenize(tp, proj, cfg, false), Error);

    // A new patch config only needs a new projector.
    PatchConfig other = patches(4, 4, 4, false);
    other.d_ar = 8;
    ParamStore<double> fresh;
    const auto proj2 = TokenProjector<double>::create(fresh, 2, other, rng);
    CHECK(tokenize(tp, proj2, other, false).length() == 2 + 2 + 1);
    CHECK_THROWS_AS(tokenize(tp, proj, other, false), Error);
}

TEST_CASE("token file round trip") {
    const GridWarp w = fixtures::micro_warp();
    ParamStore<float> store;
    Rng rng(2);
    auto tp = Triplane<float>::create(store, w, 3, 0.1f, rng);
    PatchConfig cfg = patches(2, 2, 2, false);
    cfg.d_ar = 5;
    const auto seq = tokenize(tp, TokenProjector<float>::create(store, 3, cfg, rng), cfg, false);
    const auto dir = std::filesystem::temp_directory_path() / "tritok_tok_test";
    std::filesystem::create_directories(dir);
    write_tokens(dir / "t.bin", seq);
    write_token_sidecar(dir / "t.jsonl", seq);
    const auto back = read_tokens(dir / "t.bin");
    CHECK(fixtures::bit_equal(back.tokens, seq.tokens));
    CHECK(back.provenance == seq.provenance);
    CHECK(back.config.px == 2);
    std::ifstream js(dir / "t.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(js, line);) ++lines;
    CHECK(lines == seq.length() + 1);
    std::filesystem::remove_all(dir);
}
