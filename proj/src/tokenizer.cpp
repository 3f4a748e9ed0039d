#include "tritok/tokenizer.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "tritok/error.hpp"

namespace tritok {

namespace {

const char* kAxisNames[3] = {"x", "y", "z"};

}  // namespace

void PatchConfig::validate(const std::array<std::size_t, 3>& cells) const {
    if (d_ar == 0) throw config_error("patch config: d_ar must be positive");
    for (std::size_t a = 0; a < 3; ++a) {
        const std::size_t p = patch(a);
        if (p == 0) throw config_error(std::string("patch config: p_") + kAxisNames[a] + " must be positive");
        if (cells[a] % p != 0)
            throw config_error(std::string("patch config: p_") + kAxisNames[a] + " = " + std::to_string(p) +
                               " does not divide S_" + kAxisNames[a] + " = " + std::to_string(cells[a]));
    }
    if (halfplane && (cells[0] % 2 != 0 || (cells[0] / 2) % px != 0))
        throw config_error("patch config: halfplane needs p_x = " + std::to_string(px) + " to divide S_x / 2 = " +
                           std::to_string(cells[0]) + " / 2");
}

std::array<std::array<std::size_t, 2>, 3> token_grid(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg) {
    cfg.validate(cells);
    const std::size_t sx = cfg.halfplane ? cells[0] / 2 : cells[0];
    return {{{sx / cfg.px, cells[1] / cfg.py}, {sx / cfg.px, cells[2] / cfg.pz}, {cells[1] / cfg.py, cells[2] / cfg.pz}}};
}

std::array<std::size_t, 3> plane_token_counts(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg) {
    const auto g = token_grid(cells, cfg);
    return {g[0][0] * g[0][1], g[1][0] * g[1][1], g[2][0] * g[2][1]};
}

std::size_t token_count(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg) {
    const auto c = plane_token_counts(cells, cfg);
    return c[0] + c[1] + c[2];
}

std::size_t baseline_token_count(std::size_t height, std::size_t width, std::size_t patch, std::size_t cameras,
                                 std::size_t frames) {
    if (patch == 0) throw config_error("baseline tokenizer: patch size must be positive");
    return cameras * frames * ((height + patch - 1) / patch) * ((width + patch - 1) / patch);
}

template <typename T>
Tensor<T> patchify_plane(const Tensor<T>& plane, std::size_t pi, std::size_t pj) {
    if (plane.rank() != 3) throw shape_error("patchify: plane must be [S_i,S_j,D], got " + shape_str(plane.shape()));
    const std::size_t si = plane.dim(0), sj = plane.dim(1), d = plane.dim(2);
    if (pi == 0 || si % pi != 0)
        throw config_error("patchify: row patch " + std::to_string(pi) + " does not divide " + std::to_string(si));
    if (pj == 0 || sj % pj != 0)
        throw config_error("patchify: column patch " + std::to_string(pj) + " does not divide " + std::to_string(sj));
    const std::size_t a_n = si / pi, b_n = sj / pj, k = pi * pj * d;
    // Flat index map out -> in; backward scatters through the same map.
    std::vector<std::size_t> src(si * sj * d);
    std::size_t o = 0;
    for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t b = 0; b < b_n; ++b)
            for (std::size_t u = 0; u < pi; ++u)
                for (std::size_t v = 0; v < pj; ++v)
                    for (std::size_t c = 0; c < d; ++c) src[o++] = ((a * pi + u) * sj + (b * pj + v)) * d + c;
    std::vector<T> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = plane.data()[src[i]];
    auto pn = plane.node();
    return make_op<T>("patchify", {a_n, b_n, k}, std::move(out), {plane}, [pn, src = std::move(src)](const TensorNode<T>& g) {
        T* gp = pn->grad_sink();
        if (!gp) return;
        for (std::size_t i = 0; i < src.size(); ++i) gp[src[i]] += g.grad[i];
    });
}

template <typename T>
Tensor<T> unpatchify_plane(const Tensor<T>& patches, std::size_t pi, std::size_t pj) {
    if (patches.rank() != 3 || pi == 0 || pj == 0 || patches.dim(2) % (pi * pj) != 0)
        throw shape_error("unpatchify: patches " + shape_str(patches.shape()) + " vs patch " + std::to_string(pi) + "x" +
                          std::to_string(pj));
    const std::size_t a_n = patches.dim(0), b_n = patches.dim(1), d = patches.dim(2) / (pi * pj);
    const std::size_t si = a_n * pi, sj = b_n * pj;
    std::vector<std::size_t> dst(si * sj * d);
    std::size_t o = 0;
    for (std::size_t a = 0; a < a_n; ++a)
        for (std::size_t b = 0; b < b_n; ++b)
            for (std::size_t u = 0; u < pi; ++u)
                for (std::size_t v = 0; v < pj; ++v)
                    for (std::size_t c = 0; c < d; ++c) dst[o++] = ((a * pi + u) * sj + (b * pj + v)) * d + c;
    std::vector<T> out(dst.size());
    for (std::size_t i = 0; i < dst.size(); ++i) out[dst[i]] = patches.data()[i];
    auto pn = patches.node();
    return make_op<T>("unpatchify", {si, sj, d}, std::move(out), {patches}, [pn, dst = std::move(dst)](const TensorNode<T>& g) {
        T* gp = pn->grad_sink();
        if (!gp) return;
        for (std::size_t i = 0; i < dst.size(); ++i) gp[i] += g.grad[dst[i]];
    });
}

template <typename T>
std::array<Tensor<T>, 3> halfplane_reduce(const Triplane<T>& triplane, bool front_facing, HalfKeep keep) {
    if (!front_facing)
        throw config_error("halfplane reduction requires a rig declared front-facing");
    const std::size_t sx = triplane.xy.dim(0);
    if (sx % 2 != 0) throw config_error("halfplane reduction needs an even S_x, got " + std::to_string(sx));
    const std::size_t start = keep == HalfKeep::kFront ? sx / 2 : 0;
    return {narrow(triplane.xy, 0, start, sx / 2), narrow(triplane.xz, 0, start, sx / 2), triplane.yz};
}

template <typename T>
Tensor<T> project_tokens(const Tensor<T>& patches, const Linear<T>& projection) {
    if (patches.rank() != 3 || patches.dim(2) != projection.in_features())
        throw shape_error("project_tokens: patches " + shape_str(patches.shape()) + " vs projection " +
                          shape_str(projection.weight.shape()));
    return projection(reshape(patches, {patches.dim(0) * patches.dim(1), patches.dim(2)}));
}

template <typename T>
TokenProjector<T> TokenProjector<T>::create(ParamStore<T>& store, std::size_t feature_dim, const PatchConfig& cfg,
                                            Rng& rng) {
    TokenProjector p;
    for (PlaneId id : {PlaneId::kXY, PlaneId::kXZ, PlaneId::kYZ}) {
        const auto ax = plane_axes(id);
        const std::size_t in = cfg.patch(ax[0]) * cfg.patch(ax[1]) * feature_dim;
        p.planes[static_cast<std::size_t>(id)] =
            Linear<T>::create(store, "tokenizer." + std::string(plane_name(id)), in, cfg.d_ar, rng);
    }
    return p;
}

template <typename T>
bool TokenProjector<T>::matches(std::size_t feature_dim, const PatchConfig& cfg) const {
    for (PlaneId id : {PlaneId::kXY, PlaneId::kXZ, PlaneId::kYZ}) {
        const auto ax = plane_axes(id);
        const Linear<T>& l = planes[static_cast<std::size_t>(id)];
        if (l.in_features() != cfg.patch(ax[0]) * cfg.patch(ax[1]) * feature_dim || l.out_features() != cfg.d_ar)
            return false;
    }
    return true;
}

std::vector<TokenProvenance> token_provenance(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg) {
    const auto grid = token_grid(cells, cfg);
    std::vector<TokenProvenance> out;
    for (std::size_t p = 0; p < 3; ++p)
        for (std::uint32_t r = 0; r < grid[p][0]; ++r)
            for (std::uint32_t c = 0; c < grid[p][1]; ++c) out.push_back({static_cast<PlaneId>(p), r, c});
    return out;
}

template <typename T>
TokenSequence<T> tokenize(const Triplane<T>& triplane, const TokenProjector<T>& projector, const PatchConfig& cfg,
                          bool front_facing) {
    const auto cells = triplane.warp.cells();
    cfg.validate(cells);
    if (!projector.matches(triplane.feature_dim(), cfg))
        throw shape_error("tokenize: projector does not match patch config (" + std::to_string(cfg.px) + "," +
                          std::to_string(cfg.py) + "," + std::to_string(cfg.pz) + ") and D_AR " + std::to_string(cfg.d_ar));
    const std::array<Tensor<T>, 3> planes =
        cfg.halfplane ? halfplane_reduce(triplane, front_facing, cfg.keep) : triplane.planes();
    std::vector<Tensor<T>> blocks;
    for (PlaneId id : {PlaneId::kXY, PlaneId::kXZ, PlaneId::kYZ}) {
        const auto ax = plane_axes(id);
        const std::size_t p = static_cast<std::size_t>(id);
        blocks.push_back(project_tokens(patchify_plane(planes[p], cfg.patch(ax[0]), cfg.patch(ax[1])), projector.planes[p]));
    }
    TokenSequence<T> seq;
    seq.tokens = concat(blocks, 0);
    seq.provenance = token_provenance(cells, cfg);
    seq.config = cfg;
    return seq;
}

namespace {

template <typename U>
void put(std::ofstream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U take(std::ifstream& is, const std::filesystem::path& path) {
    U v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw io_error("truncated token file '" + path.string() + "'");
    return v;
}

}  // namespace

void write_tokens(const std::filesystem::path& path, const TokenSequence<float>& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open '" + path.string() + "' for writing");
    const std::size_t l = seq.length(), d = seq.config.d_ar;
    if (seq.tokens.shape() != Shape{l, d}) throw shape_error("write_tokens: tokens " + shape_str(seq.tokens.shape()) + " vs provenance length " + std::to_string(l));
    os.write("TPTK", 4);
    put<std::uint32_t>(os, 1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.config.px));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.config.py));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.config.pz));
    put<std::uint8_t>(os, seq.config.halfplane ? 1 : 0);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(seq.config.keep));
    put<std::uint32_t>(os, seq.ordering_version);
    os.write(reinterpret_cast<const char*>(seq.tokens.data().data()), static_cast<std::streamsize>(l * d * sizeof(float)));
    for (const auto& p : seq.provenance) {
        put<std::uint8_t>(os, static_cast<std::uint8_t>(p.plane));
        put<std::uint32_t>(os, p.row);
        put<std::uint32_t>(os, p.col);
    }
    if (!os) throw io_error("write failed for '" + path.string() + "'");
}

TokenSequence<float> read_tokens(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open token file '" + path.string() + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TPTK", 4) != 0) throw io_error("'" + path.string() + "' is not a TPTK token file");
    if (const auto v = take<std::uint32_t>(is, path); v != 1) throw io_error("unsupported token file version " + std::to_string(v));
    TokenSequence<float> seq;
    const std::size_t l = take<std::uint32_t>(is, path);
    seq.config.d_ar = take<std::uint32_t>(is, path);
    seq.config.px = take<std::uint32_t>(is, path);
    seq.config.py = take<std::uint32_t>(is, path);
    seq.config.pz = take<std::uint32_t>(is, path);
    seq.config.halfplane = take<std::uint8_t>(is, path) != 0;
    seq.config.keep = static_cast<HalfKeep>(take<std::uint8_t>(is, path));
    seq.ordering_version = take<std::uint32_t>(is, path);
    std::vector<float> values(l * seq.config.d_ar);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float))))
        throw io_error("truncated token payload in '" + path.string() + "'");
    seq.tokens = Tensor<float>::from({l, seq.config.d_ar}, std::move(values));
    for (std::size_t i = 0; i < l; ++i) {
        TokenProvenance p;
        const auto plane = take<std::uint8_t>(is, path);
        if (plane > 2) throw io_error("bad plane id in token provenance");
        p.plane = static_cast<PlaneId>(plane);
        p.row = take<std::uint32_t>(is, path);
        p.col = take<std::uint32_t>(is, path);
        seq.provenance.push_back(p);
    }
    return seq;
}

void write_token_sidecar(const std::filesystem::path& path, const TokenSequence<float>& seq) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path.string() + "' for writing");
    nlohmann::json header = {{"length", seq.length()},
                             {"d_ar", seq.config.d_ar},
                             {"patch", {seq.config.px, seq.config.py, seq.config.pz}},
                             {"halfplane", seq.config.halfplane},
                             {"keep", seq.config.keep == HalfKeep::kFront ? "front" : "rear"},
                             {"ordering_version", seq.ordering_version},
                             {"ordering", "xy,xz,yz row-major"}};
    os << header.dump() << '\n';
    for (std::size_t i = 0; i < seq.length(); ++i) {
        const auto& p = seq.provenance[i];
        os << nlohmann::json{{"index", i}, {"plane", plane_name(p.plane)}, {"row", p.row}, {"col", p.col}}.dump() << '\n';
    }
}

#define TRITOK_INSTANTIATE_TOKENIZER(T)                                                                         \
    template Tensor<T> patchify_plane(const Tensor<T>&, std::size_t, std::size_t);                              \
    template Tensor<T> unpatchify_plane(const Tensor<T>&, std::size_t, std::size_t);                            \
    template std::array<Tensor<T>, 3> halfplane_reduce(const Triplane<T>&, bool, HalfKeep);                      \
    template Tensor<T> project_tokens(const Tensor<T>&, const Linear<T>&);                                       \
    template struct TokenProjector<T>;                                                                           \
    template TokenSequence<T> tokenize(const Triplane<T>&, const TokenProjector<T>&, const PatchConfig&, bool);

TRITOK_INSTANTIATE_TOKENIZER(float)
TRITOK_INSTANTIATE_TOKENIZER(double)

}  // namespace tritok
