#include "graphscore/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "graphscore/error.hpp"
#include "graphscore/metrics.hpp"
#include "graphscore/rng.hpp"

namespace graphscore {

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// dL/dz = dL/dh where z > 0, else 0
Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& z, const Eigen::MatrixXd& dh) {
    return (dh.array() * (z.array() > 0.0).cast<double>()).matrix();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        p.row(i).array() -= p.row(i).maxCoeff();
        p.row(i) = p.row(i).array().exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

// Unit l2 rows; zero rows pass through. Radii are returned for the backward.
Eigen::MatrixXd row_l2_normalize(const Eigen::MatrixXd& u, Eigen::VectorXd& radii) {
    radii = u.rowwise().norm();
    Eigen::MatrixXd h = u;
    for (Eigen::Index i = 0; i < u.rows(); ++i)
        if (radii[i] > 0.0) h.row(i) /= radii[i];
    return h;
}

// Neighborhoods N_i ∪ {i} in flat CSR form, self first.
struct SelfCsr {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> cols;
};

SelfCsr with_self(const SpMat& a) {
    SelfCsr c;
    const auto n = a.rows();
    c.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t cnt = 1;
        for (SpMat::InnerIterator it(a, i); it; ++it)
            if (it.col() != i) ++cnt;
        c.offsets[static_cast<std::size_t>(i) + 1] = c.offsets[static_cast<std::size_t>(i)] + cnt;
    }
    c.cols.resize(c.offsets.back());
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t k = c.offsets[static_cast<std::size_t>(i)];
        c.cols[k++] = static_cast<std::uint32_t>(i);
        for (SpMat::InnerIterator it(a, i); it; ++it)
            if (it.col() != i) c.cols[k++] = static_cast<std::uint32_t>(it.col());
    }
    return c;
}

struct GatLayerCache {
    Eigen::MatrixXd p; // x * w
    Eigen::VectorXd s; // p * a_src
    Eigen::VectorXd t; // p * a_dst
    std::vector<double> alpha;
    Eigen::MatrixXd pre; // sum_j alpha_ij p_j
};

void gat_attention_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& a,
                           const SelfCsr& csr, double slope, GatLayerCache& c) {
    const auto h = w.cols();
    c.p = x * w;
    c.s = c.p * a.head(h);
    c.t = c.p * a.tail(h);
    c.alpha.assign(csr.cols.size(), 0.0);
    c.pre = Eigen::MatrixXd::Zero(x.rows(), h);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto b = csr.offsets[static_cast<std::size_t>(i)];
        const auto e = csr.offsets[static_cast<std::size_t>(i) + 1];
        double mx = -std::numeric_limits<double>::infinity();
        for (auto k = b; k < e; ++k) {
            const double z = leaky(c.s[i] + c.t[csr.cols[k]], slope);
            c.alpha[k] = z;
            mx = std::max(mx, z);
        }
        double sum = 0.0;
        for (auto k = b; k < e; ++k) {
            c.alpha[k] = std::exp(c.alpha[k] - mx);
            sum += c.alpha[k];
        }
        for (auto k = b; k < e; ++k) {
            c.alpha[k] /= sum;
            c.pre.row(i) += c.alpha[k] * c.p.row(csr.cols[k]);
        }
    }
}

// Reverse of gat_attention_forward. dx may be null when the input gradient is
// not needed (first layer).
void gat_attention_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& a,
                            const SelfCsr& csr, double slope, const GatLayerCache& c,
                            const Eigen::MatrixXd& dpre, Eigen::MatrixXd& dw, Eigen::VectorXd& da,
                            Eigen::MatrixXd* dx) {
    const auto h = w.cols();
    const auto n = x.rows();
    Eigen::MatrixXd dp = Eigen::MatrixXd::Zero(n, h);
    Eigen::VectorXd ds = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dt = Eigen::VectorXd::Zero(n);
    std::vector<double> dal;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto b = csr.offsets[static_cast<std::size_t>(i)];
        const auto e = csr.offsets[static_cast<std::size_t>(i) + 1];
        dal.assign(e - b, 0.0);
        double dot = 0.0; // sum_k alpha_ik * dalpha_ik, shared softmax term
        for (auto k = b; k < e; ++k) {
            dal[k - b] = c.p.row(csr.cols[k]).dot(dpre.row(i));
            dot += c.alpha[k] * dal[k - b];
        }
        for (auto k = b; k < e; ++k) {
            const auto j = csr.cols[k];
            const double de = c.alpha[k] * (dal[k - b] - dot);
            const double z = c.s[i] + c.t[j];
            const double dz = de * (z > 0.0 ? 1.0 : slope);
            ds[i] += dz;
            dt[j] += dz;
            dp.row(j) += c.alpha[k] * dpre.row(i);
        }
    }
    da.resize(2 * h);
    da.head(h) = c.p.transpose() * ds;
    da.tail(h) = c.p.transpose() * dt;
    dp += ds * a.head(h).transpose();
    dp += dt * a.tail(h).transpose();
    dw = x.transpose() * dp;
    if (dx) *dx = dp * w.transpose();
}

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-s, s);
    return m;
}

void build_params(const GnnArch& arch, Eigen::Index n_features, std::uint64_t seed,
                  std::vector<std::string>& names, std::vector<Eigen::MatrixXd>& params) {
    if (arch.hidden == 0 || arch.out == 0) raise(Errc::InvalidArgument, "layer widths must be positive");
    if (arch.type == GnnArchType::GAT && arch.gat_heads == 0)
        raise(Errc::InvalidArgument, "gat_heads must be positive");
    names.clear();
    params.clear();
    const auto f = n_features;
    const auto h = static_cast<Eigen::Index>(arch.hidden);
    const auto o = static_cast<Eigen::Index>(arch.out);
    const auto add = [&](const std::string& name, Eigen::Index r, Eigen::Index c) {
        Rng rng = Rng::substream(seed, "init/" + name);
        names.push_back(name);
        params.push_back(glorot(r, c, rng));
    };
    switch (arch.type) {
    case GnnArchType::GCN:
        add("layer1.weight", f, h);
        add("layer2.weight", h, o);
        break;
    case GnnArchType::GraphSage:
        add("layer1.weight", 2 * f, h);
        add("layer2.weight", 2 * h, o);
        break;
    case GnnArchType::GAT: {
        const auto m = static_cast<Eigen::Index>(arch.gat_heads);
        for (Eigen::Index hd = 0; hd < m; ++hd) {
            add("layer1.head" + std::to_string(hd) + ".weight", f, h);
            add("layer1.head" + std::to_string(hd) + ".attn", 2 * h, 1);
        }
        add("layer2.weight", h * m, o);
        add("layer2.attn", 2 * o, 1);
        break;
    }
    case GnnArchType::TAGCN:
        for (std::size_t j = 0; j <= arch.tagcn_k; ++j) add("layer1.g" + std::to_string(j), f, h);
        for (std::size_t j = 0; j <= arch.tagcn_k; ++j) add("layer2.g" + std::to_string(j), h, o);
        break;
    }
}

struct FullCache {
    Eigen::MatrixXd z1, h1, logits;
    Eigen::MatrixXd p1, p2;                // GCN: op*x, op*h1
    Eigen::MatrixXd xcat1, xcat2, u1;      // GraphSage
    Eigen::VectorXd r1;                    // GraphSage row norms
    std::vector<Eigen::MatrixXd> xj1, xj2; // TAGCN powers
    std::vector<GatLayerCache> heads;      // GAT hidden heads
    GatLayerCache out_head;                // GAT output layer
};

Eigen::MatrixXd full_forward(const GnnArch& arch, const std::vector<Eigen::MatrixXd>& params,
                             const Eigen::MatrixXd& x, const SpMat& op, const SelfCsr* csr, FullCache& c) {
    switch (arch.type) {
    case GnnArchType::GCN: {
        c.p1 = op * x;
        c.z1 = c.p1 * params[0];
        c.h1 = relu(c.z1);
        c.p2 = op * c.h1;
        c.logits = c.p2 * params[1];
        break;
    }
    case GnnArchType::GraphSage: {
        const auto f = x.cols();
        c.xcat1.resize(x.rows(), 2 * f);
        c.xcat1.leftCols(f) = x;
        c.xcat1.rightCols(f) = op * x;
        c.z1 = c.xcat1 * params[0];
        c.u1 = relu(c.z1);
        c.h1 = row_l2_normalize(c.u1, c.r1);
        const auto h = c.h1.cols();
        c.xcat2.resize(x.rows(), 2 * h);
        c.xcat2.leftCols(h) = c.h1;
        c.xcat2.rightCols(h) = op * c.h1;
        c.logits = c.xcat2 * params[1];
        break;
    }
    case GnnArchType::GAT: {
        const auto m = arch.gat_heads;
        const auto h = static_cast<Eigen::Index>(arch.hidden);
        c.heads.resize(m);
        c.z1.resize(x.rows(), h * static_cast<Eigen::Index>(m));
        for (std::size_t hd = 0; hd < m; ++hd) {
            const Eigen::VectorXd a1 = params[2 * hd + 1].col(0);
            gat_attention_forward(x, params[2 * hd], a1, *csr, arch.leaky_slope, c.heads[hd]);
            c.z1.middleCols(static_cast<Eigen::Index>(hd) * h, h) = c.heads[hd].pre;
        }
        c.h1 = relu(c.z1);
        const Eigen::VectorXd a2 = params[2 * m + 1].col(0);
        gat_attention_forward(c.h1, params[2 * m], a2, *csr, arch.leaky_slope, c.out_head);
        c.logits = c.out_head.pre;
        break;
    }
    case GnnArchType::TAGCN: {
        const auto k = arch.tagcn_k;
        c.xj1.assign(k + 1, Eigen::MatrixXd());
        c.xj1[0] = x;
        c.z1 = x * params[0];
        for (std::size_t j = 1; j <= k; ++j) {
            c.xj1[j] = op * c.xj1[j - 1];
            c.z1 += c.xj1[j] * params[j];
        }
        c.h1 = relu(c.z1);
        c.xj2.assign(k + 1, Eigen::MatrixXd());
        c.xj2[0] = c.h1;
        c.logits = c.h1 * params[k + 1];
        for (std::size_t j = 1; j <= k; ++j) {
            c.xj2[j] = op * c.xj2[j - 1];
            c.logits += c.xj2[j] * params[k + 1 + j];
        }
        break;
    }
    }
    return c.logits;
}

void full_backward(const GnnArch& arch, const std::vector<Eigen::MatrixXd>& params, const Eigen::MatrixXd& x,
                   const SpMat& op, const SelfCsr* csr, const FullCache& c, const Eigen::MatrixXd& dlogits,
                   std::vector<Eigen::MatrixXd>& grads) {
    grads.assign(params.size(), Eigen::MatrixXd());
    switch (arch.type) {
    case GnnArchType::GCN: {
        grads[1] = c.p2.transpose() * dlogits;
        // op is symmetric, so d(op*h1) pulls back through op directly
        const Eigen::MatrixXd dh1 = op * (dlogits * params[1].transpose());
        const Eigen::MatrixXd dz1 = relu_backward(c.z1, dh1);
        grads[0] = c.p1.transpose() * dz1;
        break;
    }
    case GnnArchType::GraphSage: {
        grads[1] = c.xcat2.transpose() * dlogits;
        const Eigen::MatrixXd dxcat2 = dlogits * params[1].transpose();
        const auto h = c.h1.cols();
        Eigen::MatrixXd dh1 = dxcat2.leftCols(h) + op.transpose() * dxcat2.rightCols(h);
        Eigen::MatrixXd du1(dh1.rows(), dh1.cols());
        for (Eigen::Index i = 0; i < dh1.rows(); ++i) {
            if (c.r1[i] > 0.0)
                du1.row(i) = (dh1.row(i) - c.h1.row(i) * c.h1.row(i).dot(dh1.row(i))) / c.r1[i];
            else
                du1.row(i).setZero();
        }
        const Eigen::MatrixXd dz1 = relu_backward(c.z1, du1);
        grads[0] = c.xcat1.transpose() * dz1;
        break;
    }
    case GnnArchType::GAT: {
        const auto m = arch.gat_heads;
        const auto h = static_cast<Eigen::Index>(arch.hidden);
        Eigen::MatrixXd dh1;
        {
            const Eigen::VectorXd a2 = params[2 * m + 1].col(0);
            Eigen::MatrixXd dw2;
            Eigen::VectorXd da2;
            gat_attention_backward(c.h1, params[2 * m], a2, *csr, arch.leaky_slope, c.out_head, dlogits, dw2,
                                   da2, &dh1);
            grads[2 * m] = dw2;
            grads[2 * m + 1] = da2;
        }
        const Eigen::MatrixXd dz1 = relu_backward(c.z1, dh1);
        for (std::size_t hd = 0; hd < m; ++hd) {
            const Eigen::VectorXd a1 = params[2 * hd + 1].col(0);
            const Eigen::MatrixXd dpre = dz1.middleCols(static_cast<Eigen::Index>(hd) * h, h);
            Eigen::MatrixXd dw;
            Eigen::VectorXd da;
            gat_attention_backward(x, params[2 * hd], a1, *csr, arch.leaky_slope, c.heads[hd], dpre, dw, da,
                                   nullptr);
            grads[2 * hd] = dw;
            grads[2 * hd + 1] = da;
        }
        break;
    }
    case GnnArchType::TAGCN: {
        const auto k = arch.tagcn_k;
        Eigen::MatrixXd t = dlogits;
        Eigen::MatrixXd dh1 = Eigen::MatrixXd::Zero(c.h1.rows(), c.h1.cols());
        for (std::size_t j = 0; j <= k; ++j) {
            grads[k + 1 + j] = c.xj2[j].transpose() * dlogits;
            if (j > 0) t = op * t; // op symmetric: (op^j)^T dlogits
            dh1 += (j == 0 ? dlogits : t) * params[k + 1 + j].transpose();
        }
        const Eigen::MatrixXd dz1 = relu_backward(c.z1, dh1);
        for (std::size_t j = 0; j <= k; ++j) grads[j] = c.xj1[j].transpose() * dz1;
        break;
    }
    }
}

// Loss and, when dlogits is non-null, its gradient in one pass.
double wce_with_grad(const Eigen::MatrixXd& logits, const std::vector<std::int8_t>& labels,
                     const std::vector<double>& class_weights, const std::vector<std::uint8_t>& mask,
                     Eigen::MatrixXd* dlogits) {
    const auto n = logits.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n || static_cast<Eigen::Index>(mask.size()) != n)
        raise(Errc::ShapeMismatch, "logits, labels and mask differ in length");
    if (static_cast<Eigen::Index>(class_weights.size()) != logits.cols())
        raise(Errc::ShapeMismatch, "one class weight per output column required");
    for (const double w : class_weights)
        if (!(w >= 0.0)) raise(Errc::InvalidArgument, "class weights must be non-negative");

    double wsum = 0.0;
    std::size_t n_masked = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        ++n_masked;
        const auto y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols())
            raise(Errc::InvalidArgument, "mask selects a node without a valid label");
        wsum += class_weights[static_cast<std::size_t>(y)];
    }
    if (n_masked == 0) raise(Errc::EmptyMask, "loss mask selects no nodes");
    if (!(wsum > 0.0)) raise(Errc::InvalidArgument, "masked class weights sum to zero");

    if (dlogits) dlogits->setZero(n, logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const auto y = labels[static_cast<std::size_t>(i)];
        const double w = class_weights[static_cast<std::size_t>(y)];
        const double mx = logits.row(i).maxCoeff();
        const double se = (logits.row(i).array() - mx).exp().sum();
        loss += w * (mx + std::log(se) - logits(i, y));
        if (dlogits) {
            Eigen::RowVectorXd p = (logits.row(i).array() - mx).exp() / se;
            p[y] -= 1.0;
            dlogits->row(i) = (w / wsum) * p;
        }
    }
    return loss / wsum;
}

// Per-class counts over masked nodes; every class must appear.
std::vector<std::size_t> masked_class_counts(const std::vector<std::int8_t>& y,
                                             const std::vector<std::uint8_t>& mask, std::size_t n_classes) {
    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (mask[i]) ++counts[static_cast<std::size_t>(y[i])];
    if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 0)
        raise(Errc::EmptyMask, "train mask selects no nodes");
    for (std::size_t c = 0; c < n_classes; ++c)
        if (counts[c] == 0)
            raise(Errc::SingleClassLabels, "class " + std::to_string(c) + " is absent from the train mask");
    return counts;
}

std::vector<double> default_class_weights(const std::vector<std::size_t>& counts) {
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    std::vector<double> w(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        w[c] = total / (static_cast<double>(counts.size()) * static_cast<double>(counts[c]));
    return w;
}

NormMode mode_for(GnnArchType t) {
    switch (t) {
    case GnnArchType::GCN: return NormMode::GcnRenorm;
    case GnnArchType::GraphSage: return NormMode::RowStochastic;
    case GnnArchType::GAT: return NormMode::Raw;
    case GnnArchType::TAGCN: return NormMode::SymNorm;
    }
    raise(Errc::InvalidArgument, "unknown architecture");
}

void check_finite_features(const Eigen::MatrixXd& x) {
    if (!x.allFinite()) raise(Errc::NonFiniteFeature, "node features must be finite");
}

} // namespace

const char* to_string(NormMode m) {
    switch (m) {
    case NormMode::GcnRenorm: return "gcn_renorm";
    case NormMode::SymNorm: return "sym_norm";
    case NormMode::RowStochastic: return "row_stochastic";
    case NormMode::Raw: return "raw";
    }
    return "?";
}

const char* to_string(GnnArchType t) {
    switch (t) {
    case GnnArchType::GCN: return "gcn";
    case GnnArchType::GraphSage: return "sage";
    case GnnArchType::GAT: return "gat";
    case GnnArchType::TAGCN: return "tagcn";
    }
    return "?";
}

std::optional<GnnArchType> gnn_arch_from_string(std::string_view s) {
    if (s == "gcn") return GnnArchType::GCN;
    if (s == "sage" || s == "graphsage") return GnnArchType::GraphSage;
    if (s == "gat") return GnnArchType::GAT;
    if (s == "tagcn") return GnnArchType::TAGCN;
    return std::nullopt;
}

PropagationOperator normalize_adjacency(const Graph& g, NormMode mode) {
    const Graph sym = g.directed() ? g.symmetrized() : g;
    const auto n = static_cast<Eigen::Index>(sym.node_count());

    std::vector<double> degree(sym.node_count(), 0.0);
    for (NodeId i = 0; i < sym.node_count(); ++i)
        for (const auto& nb : sym.out_neighbors(i)) degree[i] += nb.weight;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * sym.edge_count() + sym.node_count());
    switch (mode) {
    case NormMode::Raw:
        for (NodeId i = 0; i < sym.node_count(); ++i)
            for (const auto& nb : sym.out_neighbors(i))
                trip.emplace_back(static_cast<int>(i), static_cast<int>(nb.id), nb.weight);
        break;
    case NormMode::RowStochastic:
        for (NodeId i = 0; i < sym.node_count(); ++i) {
            if (degree[i] <= 0.0) continue;
            for (const auto& nb : sym.out_neighbors(i))
                trip.emplace_back(static_cast<int>(i), static_cast<int>(nb.id), nb.weight / degree[i]);
        }
        break;
    case NormMode::SymNorm:
        for (NodeId i = 0; i < sym.node_count(); ++i)
            for (const auto& nb : sym.out_neighbors(i))
                if (degree[i] > 0.0 && degree[nb.id] > 0.0)
                    trip.emplace_back(static_cast<int>(i), static_cast<int>(nb.id),
                                      nb.weight / std::sqrt(degree[i] * degree[nb.id]));
        break;
    case NormMode::GcnRenorm:
        for (NodeId i = 0; i < sym.node_count(); ++i) {
            const double di = degree[i] + 1.0;
            trip.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0 / di);
            for (const auto& nb : sym.out_neighbors(i))
                trip.emplace_back(static_cast<int>(i), static_cast<int>(nb.id),
                                  nb.weight / std::sqrt(di * (degree[nb.id] + 1.0)));
        }
        break;
    }

    PropagationOperator op;
    op.mode = mode;
    op.matrix.resize(n, n);
    op.matrix.setFromTriplets(trip.begin(), trip.end());
    return op;
}

Eigen::MatrixXd gcn_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x,
                            const PropagationOperator& op, bool use_relu) {
    if (op.mode != NormMode::GcnRenorm) raise(Errc::InvalidArgument, "gcn_forward needs a GcnRenorm operator");
    if (op.matrix.rows() != x.rows() || w.rows() != x.cols())
        raise(Errc::ShapeMismatch, "gcn_forward operand shapes do not conform");
    Eigen::MatrixXd z = op.matrix * x * w;
    return use_relu ? relu(z) : z;
}

Eigen::MatrixXd sage_forward(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x,
                             const PropagationOperator& mean_op, bool use_relu, bool l2_normalize) {
    if (mean_op.mode != NormMode::RowStochastic)
        raise(Errc::InvalidArgument, "sage_forward needs a RowStochastic operator");
    if (mean_op.matrix.rows() != x.rows() || w.rows() != 2 * x.cols())
        raise(Errc::ShapeMismatch, "sage_forward operand shapes do not conform");
    Eigen::MatrixXd xcat(x.rows(), 2 * x.cols());
    xcat.leftCols(x.cols()) = x;
    xcat.rightCols(x.cols()) = mean_op.matrix * x;
    Eigen::MatrixXd z = xcat * w;
    if (use_relu) z = relu(z);
    if (!l2_normalize) return z;
    Eigen::VectorXd radii;
    return row_l2_normalize(z, radii);
}

Eigen::MatrixXd gat_forward(const Eigen::MatrixXd& w, const Eigen::VectorXd& a, const Eigen::MatrixXd& x,
                            const PropagationOperator& raw_op, double leaky_slope, bool use_relu) {
    if (raw_op.mode != NormMode::Raw) raise(Errc::InvalidArgument, "gat_forward needs a Raw operator");
    if (raw_op.matrix.rows() != x.rows() || w.rows() != x.cols() || a.size() != 2 * w.cols())
        raise(Errc::ShapeMismatch, "gat_forward operand shapes do not conform");
    const SelfCsr csr = with_self(raw_op.matrix);
    GatLayerCache c;
    gat_attention_forward(x, w, a, csr, leaky_slope, c);
    return use_relu ? relu(c.pre) : c.pre;
}

Eigen::MatrixXd tagcn_forward(const std::vector<Eigen::MatrixXd>& g_coeffs, const Eigen::MatrixXd& x,
                              const PropagationOperator& op, bool use_relu) {
    if (op.mode != NormMode::SymNorm) raise(Errc::InvalidArgument, "tagcn_forward needs a SymNorm operator");
    if (g_coeffs.empty()) raise(Errc::InvalidArgument, "tagcn_forward needs at least the degree-0 coefficient");
    for (const auto& gc : g_coeffs)
        if (gc.rows() != x.cols() || gc.cols() != g_coeffs.front().cols())
            raise(Errc::ShapeMismatch, "tagcn coefficient shapes do not conform");
    if (op.matrix.rows() != x.rows()) raise(Errc::ShapeMismatch, "operator does not match node count");
    Eigen::MatrixXd z = x * g_coeffs[0];
    Eigen::MatrixXd xj = x;
    for (std::size_t j = 1; j < g_coeffs.size(); ++j) {
        xj = op.matrix * xj;
        z += xj * g_coeffs[j];
    }
    return use_relu ? relu(z) : z;
}

double weighted_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::int8_t>& labels,
                              const std::vector<double>& class_weights, const std::vector<std::uint8_t>& mask) {
    return wce_with_grad(logits, labels, class_weights, mask, nullptr);
}

Standardization fit_standardization(const Eigen::MatrixXd& x, const std::vector<std::uint8_t>& mask) {
    if (static_cast<Eigen::Index>(mask.size()) != x.rows())
        raise(Errc::ShapeMismatch, "mask does not match row count");
    std::size_t cnt = 0;
    for (const auto m : mask) cnt += m ? 1 : 0;
    if (cnt == 0) raise(Errc::EmptyMask, "standardization mask selects no rows");

    Standardization s;
    s.mean = Eigen::VectorXd::Zero(x.cols());
    s.scale = Eigen::VectorXd::Ones(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (mask[static_cast<std::size_t>(i)]) s.mean += x.row(i).transpose();
    s.mean /= static_cast<double>(cnt);
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        if (mask[static_cast<std::size_t>(i)]) ss += (x.row(i).transpose() - s.mean).cwiseAbs2();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double sd = std::sqrt(ss[c] / static_cast<double>(cnt));
        s.scale[c] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x, const Standardization& s) {
    if (x.cols() != s.mean.size()) raise(Errc::ShapeMismatch, "standardization does not match column count");
    return (x.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
}

GnnTrainResult train_gnn(const Graph& g, const Eigen::MatrixXd& x, const std::vector<std::int8_t>& y,
                         const GnnArch& arch, const TrainConfig& cfg) {
    const auto n = x.rows();
    if (static_cast<Eigen::Index>(g.node_count()) != n)
        raise(Errc::ShapeMismatch, "feature rows must match graph nodes");
    if (static_cast<Eigen::Index>(y.size()) != n || static_cast<Eigen::Index>(cfg.train_mask.size()) != n ||
        static_cast<Eigen::Index>(cfg.test_mask.size()) != n)
        raise(Errc::ShapeMismatch, "labels and masks must match graph nodes");
    if (!(cfg.learning_rate > 0.0)) raise(Errc::InvalidArgument, "learning_rate must be positive");
    if (cfg.epochs < 1) raise(Errc::InvalidArgument, "epochs must be at least 1");
    if (!(cfg.momentum >= 0.0) || cfg.momentum >= 1.0)
        raise(Errc::InvalidArgument, "momentum must lie in [0, 1)");
    check_finite_features(x);
    for (std::size_t i = 0; i < cfg.train_mask.size(); ++i) {
        if (cfg.train_mask[i] && cfg.test_mask[i])
            raise(Errc::InvalidArgument, "train and test masks overlap at node " + std::to_string(i));
        if (cfg.train_mask[i] && y[i] < 0)
            raise(Errc::InvalidArgument, "train mask selects unlabeled node " + std::to_string(i));
    }

    const auto counts = masked_class_counts(y, cfg.train_mask, arch.out);
    std::vector<double> weights = cfg.class_weights;
    if (weights.empty()) {
        weights = default_class_weights(counts);
    } else {
        if (weights.size() != arch.out) raise(Errc::ShapeMismatch, "one class weight per class required");
        for (const double w : weights)
            if (!(w > 0.0)) raise(Errc::InvalidArgument, "class weights must be positive");
    }

    GnnModel model;
    model.arch = arch;
    model.seed = cfg.seed;
    model.standardization = fit_standardization(x, cfg.train_mask);
    const Eigen::MatrixXd xs = apply_standardization(x, model.standardization);
    build_params(arch, x.cols(), cfg.seed, model.param_names, model.params);

    const PropagationOperator op = normalize_adjacency(g, mode_for(arch.type));
    SelfCsr csr;
    if (arch.type == GnnArchType::GAT) csr = with_self(op.matrix);

    // labeled train rows for the per-epoch AUC trace
    std::vector<std::int8_t> y_train;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < cfg.train_mask.size(); ++i)
        if (cfg.train_mask[i]) {
            train_rows.push_back(i);
            y_train.push_back(y[i]);
        }

    GnnTrainResult result;
    std::vector<Eigen::MatrixXd> grads;
    std::vector<Eigen::MatrixXd> velocity;
    if (cfg.momentum > 0.0) {
        velocity.resize(model.params.size());
        for (std::size_t p = 0; p < model.params.size(); ++p)
            velocity[p] = Eigen::MatrixXd::Zero(model.params[p].rows(), model.params[p].cols());
    }

    FullCache cache;
    Eigen::MatrixXd dlogits;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Eigen::MatrixXd logits = full_forward(arch, model.params, xs, op.matrix, &csr, cache);
        const double loss = wce_with_grad(logits, y, weights, cfg.train_mask, &dlogits);
        if (!std::isfinite(loss))
            raise(Errc::TrainingDiverged, "loss diverged at epoch " + std::to_string(epoch));

        result.history.loss.push_back(loss);
        {
            const Eigen::MatrixXd probs = softmax_rows(logits);
            std::vector<double> scores(train_rows.size());
            for (std::size_t k = 0; k < train_rows.size(); ++k)
                scores[k] = probs(static_cast<Eigen::Index>(train_rows[k]), 1);
            result.history.train_auc.push_back(auc(scores, y_train));
        }

        full_backward(arch, model.params, xs, op.matrix, &csr, cache, dlogits, grads);
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            if (cfg.momentum > 0.0) {
                velocity[p] = cfg.momentum * velocity[p] + grads[p];
                model.params[p] -= cfg.learning_rate * velocity[p];
            } else {
                model.params[p] -= cfg.learning_rate * grads[p];
            }
            if (!model.params[p].allFinite())
                raise(Errc::TrainingDiverged, "parameter '" + model.param_names[p] +
                                                  "' diverged at epoch " + std::to_string(epoch));
        }
    }

    model.loss_history = result.history.loss;
    result.model = std::move(model);
    return result;
}

std::vector<double> predict_gnn(const GnnModel& model, const Graph& g, const Eigen::MatrixXd& x) {
    if (static_cast<Eigen::Index>(g.node_count()) != x.rows())
        raise(Errc::ShapeMismatch, "feature rows must match graph nodes");
    check_finite_features(x);
    const Eigen::MatrixXd xs = apply_standardization(x, model.standardization);

    const PropagationOperator op = normalize_adjacency(g, mode_for(model.arch.type));
    SelfCsr csr;
    if (model.arch.type == GnnArchType::GAT) csr = with_self(op.matrix);

    FullCache cache;
    const Eigen::MatrixXd logits = full_forward(model.arch, model.params, xs, op.matrix, &csr, cache);
    const Eigen::MatrixXd probs = softmax_rows(logits);
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = probs(i, 1);
    return out;
}

double gradient_check(const Graph& g, const Eigen::MatrixXd& x, const std::vector<std::int8_t>& y,
                      const std::vector<std::uint8_t>& train_mask, const GnnArch& arch, std::uint64_t seed,
                      double epsilon) {
    if (x.rows() > 20 || x.cols() > 8)
        raise(Errc::InvalidArgument, "gradient check instances are capped at 20 nodes and 8 features");
    if (static_cast<Eigen::Index>(g.node_count()) != x.rows())
        raise(Errc::ShapeMismatch, "feature rows must match graph nodes");
    check_finite_features(x);

    const std::vector<double> weights = default_class_weights(masked_class_counts(y, train_mask, arch.out));
    const PropagationOperator op = normalize_adjacency(g, mode_for(arch.type));
    SelfCsr csr;
    if (arch.type == GnnArchType::GAT) csr = with_self(op.matrix);

    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> params;
    build_params(arch, x.cols(), seed, names, params);

    FullCache cache;
    Eigen::MatrixXd dlogits;
    const Eigen::MatrixXd logits = full_forward(arch, params, x, op.matrix, &csr, cache);
    wce_with_grad(logits, y, weights, train_mask, &dlogits);
    std::vector<Eigen::MatrixXd> grads;
    full_backward(arch, params, x, op.matrix, &csr, cache, dlogits, grads);

    const auto loss_at = [&]() {
        FullCache c2;
        return wce_with_grad(full_forward(arch, params, x, op.matrix, &csr, c2), y, weights, train_mask,
                             nullptr);
    };

    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (Eigen::Index r = 0; r < params[p].rows(); ++r) {
            for (Eigen::Index c = 0; c < params[p].cols(); ++c) {
                const double saved = params[p](r, c);
                params[p](r, c) = saved + epsilon;
                const double up = loss_at();
                params[p](r, c) = saved - epsilon;
                const double down = loss_at();
                params[p](r, c) = saved;
                const double numeric = (up - down) / (2.0 * epsilon);
                const double analytic = grads[p](r, c);
                const double rel = std::fabs(analytic - numeric) /
                                   std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
                worst = std::max(worst, rel);
            }
        }
    }
    return worst;
}

void save_gnn(const GnnModel& model, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["model"] = "gnn";
    j["arch"] = {
        {"type", to_string(model.arch.type)},   {"hidden", model.arch.hidden},
        {"out", model.arch.out},                {"tagcn_k", model.arch.tagcn_k},
        {"gat_heads", model.arch.gat_heads},    {"leaky_slope", model.arch.leaky_slope},
    };
    j["seed"] = model.seed;
    j["standardization"] = {
        {"mean", std::vector<double>(model.standardization.mean.data(),
                                     model.standardization.mean.data() + model.standardization.mean.size())},
        {"scale", std::vector<double>(model.standardization.scale.data(),
                                      model.standardization.scale.data() + model.standardization.scale.size())},
    };
    auto params = nlohmann::json::array();
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        const auto& m = model.params[p];
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
        params.push_back({{"name", model.param_names[p]},
                          {"rows", m.rows()},
                          {"cols", m.cols()},
                          {"data", std::move(data)}});
    }
    j["params"] = std::move(params);
    j["loss_history"] = model.loss_history;

    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) raise(Errc::IoError, "failed writing '" + path + "'");
}

GnnModel load_gnn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::ParseError, "invalid checkpoint JSON in '" + path + "': " + e.what());
    }
    try {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
            raise(Errc::SchemaMismatch, "unsupported checkpoint schema_version");
        if (j.value("model", std::string{}) != "gnn")
            raise(Errc::SchemaMismatch, "checkpoint is not a gnn model");

        GnnModel model;
        const auto& aj = j.at("arch");
        const auto type = gnn_arch_from_string(aj.at("type").get<std::string>());
        if (!type) raise(Errc::SchemaMismatch, "unknown architecture '" + aj.at("type").get<std::string>() + "'");
        model.arch.type = *type;
        model.arch.hidden = aj.at("hidden").get<std::size_t>();
        model.arch.out = aj.at("out").get<std::size_t>();
        model.arch.tagcn_k = aj.at("tagcn_k").get<std::size_t>();
        model.arch.gat_heads = aj.at("gat_heads").get<std::size_t>();
        model.arch.leaky_slope = aj.at("leaky_slope").get<double>();
        model.seed = j.at("seed").get<std::uint64_t>();

        const auto mean = j.at("standardization").at("mean").get<std::vector<double>>();
        const auto scale = j.at("standardization").at("scale").get<std::vector<double>>();
        if (mean.size() != scale.size()) raise(Errc::SchemaMismatch, "standardization vectors differ in length");
        model.standardization.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        model.standardization.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));

        // the stored layout must be exactly what build_params would produce
        std::vector<std::string> expect_names;
        std::vector<Eigen::MatrixXd> expect_shapes;
        build_params(model.arch, model.standardization.mean.size(), 0, expect_names, expect_shapes);
        const auto& pj = j.at("params");
        if (pj.size() != expect_names.size())
            raise(Errc::SchemaMismatch, "checkpoint parameter count does not match the architecture");
        for (std::size_t p = 0; p < pj.size(); ++p) {
            const auto name = pj[p].at("name").get<std::string>();
            const auto rows = pj[p].at("rows").get<Eigen::Index>();
            const auto cols = pj[p].at("cols").get<Eigen::Index>();
            if (name != expect_names[p] || rows != expect_shapes[p].rows() || cols != expect_shapes[p].cols())
                raise(Errc::SchemaMismatch, "checkpoint parameter '" + name + "' does not match the architecture");
            const auto data = pj[p].at("data").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(data.size()) != rows * cols)
                raise(Errc::SchemaMismatch, "checkpoint parameter '" + name + "' has wrong element count");
            Eigen::MatrixXd m(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r)
                for (Eigen::Index c = 0; c < cols; ++c)
                    m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
            if (!m.allFinite()) raise(Errc::ParseError, "non-finite parameter in checkpoint");
            model.param_names.push_back(name);
            model.params.push_back(std::move(m));
        }
        if (j.contains("loss_history")) model.loss_history = j.at("loss_history").get<std::vector<double>>();
        return model;
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::ParseError, "malformed checkpoint JSON in '" + path + "': " + e.what());
    }
}

} // namespace graphscore
