#include "sonovid/trajectory.h"

#include <stdexcept>
#include <string>
#include <utility>

namespace sonovid {

namespace {

const char* kBlockNames[3] = {"coarse", "mid", "fine"};

// Advances every block one step on an open graph; h vars are replaced with
// the new hidden states. cur and ea are [B, L*d], noise is [B, noise_dim].
Var advance(Graph& g, const TrajectoryModel& m, std::vector<std::vector<Var>>& h, Var cur, Var ea,
            Var noise, bool train) {
    std::vector<Var> groups;
    for (std::size_t bi = 0; bi < m.blocks.size(); ++bi) {
        const TrajectoryBlock& blk = m.blocks[bi];
        const int start = blk.row_begin * m.latent_dim;
        const int len = (blk.row_end - blk.row_begin) * m.latent_dim;
        Var cur_rows = slice_cols(cur, start, len);
        Var ea_rows = slice_cols(ea, start, len);
        Var x = add(cur_rows, ea_rows);
        for (std::size_t c = 0; c < blk.cells.size(); ++c) {
            h[bi][c] = blk.cells[c].step(g, x, h[bi][c], train);
            x = h[bi][c];
        }
        Var res = blk.head(g, concat_cols(std::vector<Var>{x, noise, ea_rows}), train);
        groups.push_back(add(cur_rows, res));
    }
    return concat_cols(groups);
}

std::vector<std::vector<Var>> zero_hidden(Graph& g, const TrajectoryModel& m, int B) {
    std::vector<std::vector<Var>> h(m.blocks.size());
    for (std::size_t bi = 0; bi < m.blocks.size(); ++bi)
        for (std::size_t c = 0; c < m.blocks[bi].cells.size(); ++c)
            h[bi].push_back(g.leaf(Tensor({B, m.hidden}), false));
    return h;
}

Tensor flat_row(const Tensor& code) {
    Tensor t({1, static_cast<int>(code.data.size())});
    t.data = code.data;
    return t;
}

}  // namespace

TrajectoryModel make_trajectory(const TrainConfig& cfg, RandomSource& rng) {
    TrajectoryModel m;
    m.latent_dim = cfg.latent_dim;
    m.layers = cfg.style_layers;
    m.frames = cfg.video_frames;
    m.hidden = cfg.gru_hidden;
    m.noise_dim = cfg.noise_dim;
    const GroupBounds b = group_bounds(cfg);
    const int starts[4] = {0, b.coarse_end, b.mid_end, b.layers};
    for (int bi = 0; bi < 3; ++bi) {
        TrajectoryBlock blk;
        blk.row_begin = starts[bi];
        blk.row_end = starts[bi + 1];
        const int group_cols = (blk.row_end - blk.row_begin) * m.latent_dim;
        const std::string base = std::string("traj.") + kBlockNames[bi];
        for (int c = 0; c < cfg.gru_cells; ++c) {
            const int in = c == 0 ? group_cols : m.hidden;
            blk.cells.push_back(
                make_gru_cell(m.params, base + ".cell" + std::to_string(c), in, m.hidden, rng));
        }
        blk.head = make_linear(m.params, base + ".head", m.hidden + m.noise_dim + group_cols,
                               group_cols, rng, 1.0, true, true);
        m.blocks.push_back(std::move(blk));
    }
    return m;
}

TrajectoryState init_state(const TrajectoryModel& m, Tensor current, int horizon) {
    if (current.shape != std::vector<int>{m.layers, m.latent_dim})
        throw std::invalid_argument("init_state: want code [" + std::to_string(m.layers) + "," +
                                    std::to_string(m.latent_dim) + "], got " +
                                    shape_str(current.shape));
    TrajectoryState s;
    s.horizon = horizon > 0 ? horizon : m.frames;
    s.current = std::move(current);
    s.h.resize(m.blocks.size());
    for (std::size_t bi = 0; bi < m.blocks.size(); ++bi)
        s.h[bi].assign(m.blocks[bi].cells.size(), Tensor({1, m.hidden}));
    return s;
}

TrajectoryState step(const TrajectoryModel& m, const SoundEncoder& enc,
                     const TrajectoryState& state, const MelSpectrogram& seg,
                     const Tensor& noise) {
    if (state.t >= state.horizon)
        throw std::invalid_argument("step: timestep " + std::to_string(state.t) +
                                    " is past the horizon " + std::to_string(state.horizon));
    if (static_cast<int>(noise.data.size()) != m.noise_dim)
        throw std::invalid_argument("step: want a noise vector of " + std::to_string(m.noise_dim));
    if (state.current.shape != std::vector<int>{m.layers, m.latent_dim})
        throw std::invalid_argument("step: bad state code shape " + shape_str(state.current.shape));

    Graph g;
    std::vector<std::vector<Var>> h(state.h.size());
    for (std::size_t bi = 0; bi < state.h.size(); ++bi)
        for (const Tensor& ht : state.h[bi]) h[bi].push_back(g.leaf(ht, false));
    Var cur = g.leaf(flat_row(state.current), false);
    Var ea = g.leaf(flat_row(enc.invert(seg)), false);
    Tensor nrow({1, m.noise_dim});
    nrow.data = noise.data;
    Var out = advance(g, m, h, cur, ea, g.leaf(std::move(nrow), false), false);

    TrajectoryState next;
    next.t = state.t + 1;
    next.horizon = state.horizon;
    next.current = Tensor({m.layers, m.latent_dim});
    next.current.data = out.value().data;
    next.h.resize(h.size());
    for (std::size_t bi = 0; bi < h.size(); ++bi)
        for (const Var& hv : h[bi]) next.h[bi].push_back(hv.value());
    return next;
}

std::vector<Tensor> rollout(const TrajectoryModel& m, const SoundEncoder& enc, const Tensor& w0,
                            const std::vector<MelSpectrogram>& segs, std::uint64_t seed) {
    if (segs.empty()) throw std::invalid_argument("rollout: no segments");
    const int T = static_cast<int>(segs.size());
    std::vector<Tensor> codes;
    codes.push_back(fuse(w0, enc.invert(segs[0])));
    TrajectoryState state = init_state(m, codes.back(), T);
    RandomSource rng(seed);
    for (int t = 1; t < T; ++t) {
        Tensor noise({m.noise_dim});
        rng.fill_normal(noise);
        state = step(m, enc, state, segs[static_cast<std::size_t>(t - 1)], noise);
        codes.push_back(state.current);
    }
    return codes;
}

VideoClip render_video(const StyleGenerator& gen, const std::vector<Tensor>& codes, int fps) {
    if (codes.empty()) throw std::invalid_argument("render_video: no codes");
    std::vector<const Tensor*> ptrs;
    for (const Tensor& c : codes) ptrs.push_back(&c);
    Graph g;
    Var frames = gen.synthesize_batch(g, g.leaf(flatten_codes(ptrs), false), false);
    const Tensor& px = frames.value();
    const std::size_t stride = static_cast<std::size_t>(3) * gen.image_size * gen.image_size;
    VideoClip clip;
    clip.fps = fps;
    for (std::size_t t = 0; t < codes.size(); ++t) {
        Image im(3, gen.image_size, gen.image_size);
        std::copy(px.data.begin() + static_cast<std::ptrdiff_t>(t * stride),
                  px.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * stride),
                  im.pixels.begin());
        clip.frames.push_back(std::move(im));
    }
    return clip;
}

std::vector<Var> rollout_codes(Graph& g, const TrajectoryModel& m, Var w0,
                               const std::vector<Var>& ea_codes,
                               const std::vector<Tensor>& noises, bool train) {
    if (ea_codes.empty()) throw std::invalid_argument("rollout_codes: no sound codes");
    const int T = static_cast<int>(ea_codes.size());
    if (static_cast<int>(noises.size()) != T - 1)
        throw std::invalid_argument("rollout_codes: want " + std::to_string(T - 1) + " noise draws");
    const int B = w0.value().shape[0];
    std::vector<std::vector<Var>> h = zero_hidden(g, m, B);
    std::vector<Var> codes;
    codes.push_back(add(w0, ea_codes[0]));
    for (int t = 1; t < T; ++t) {
        Var noise = g.leaf(noises[static_cast<std::size_t>(t - 1)], false);
        codes.push_back(
            advance(g, m, h, codes.back(), ea_codes[static_cast<std::size_t>(t - 1)], noise, train));
    }
    return codes;
}

}  // namespace sonovid
