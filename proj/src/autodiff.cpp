#include "cenet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "cenet/kernels.hpp"

namespace cenet::ad {

namespace {
constexpr double kLogEps = 1e-12;

[[noreturn]] void shape_error(const std::string& op, const Tensor& a,
                              const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() +
                              " and " + b.shape_str());
}
}  // namespace

NodeId Tape::push(Tensor value, std::function<void(Tape&, Node&)> back) {
  auto n = std::make_unique<Node>();
  n->owned = std::move(value);
  n->val = &n->owned;
  n->back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor t) { return push(std::move(t), nullptr); }

NodeId Tape::leaf(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->val = &p.value;
  n->param = &p;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Tape::value(NodeId id) const { return *nodes_[id]->val; }
const Tensor& Tape::grad(NodeId id) const { return nodes_[id]->grad; }

NodeId Tape::gather_rows(NodeId table, std::vector<std::uint32_t> ids) {
  const Tensor& t = value(table);
  if (t.ndim() != 2) throw std::invalid_argument("gather_rows: table not 2-d");
  const std::size_t d = t.dim(1);
  for (auto id : ids) {
    if (id >= t.dim(0)) {
      throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                              " out of range for table " + t.shape_str());
    }
  }
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(t.data() + ids[i] * d, d, out.data() + i * d);
  }
  return push(std::move(out),
              [table, ids = std::move(ids), d](Tape& tp, Node& self) {
                Tensor& tg = tp.node(table).grad;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  kernels::active().axpy(1.0, self.grad.data() + i * d,
                                         tg.data() + ids[i] * d, d);
                }
              });
}

NodeId Tape::concat_cols(std::span<const NodeId> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t batch = value(xs[0]).dim(0);
  std::size_t total = 0;
  for (auto x : xs) {
    if (value(x).ndim() != 2 || value(x).dim(0) != batch)
      shape_error("concat_cols", value(xs[0]), value(x));
    total += value(x).dim(1);
  }
  Tensor out({batch, total});
  std::size_t off = 0;
  for (auto x : xs) {
    const Tensor& v = value(x);
    const std::size_t d = v.dim(1);
    for (std::size_t i = 0; i < batch; ++i) {
      std::copy_n(v.data() + i * d, d, out.data() + i * total + off);
    }
    off += d;
  }
  std::vector<NodeId> inputs(xs.begin(), xs.end());
  return push(std::move(out),
              [inputs, batch, total](Tape& tp, Node& self) {
                std::size_t off = 0;
                for (auto x : inputs) {
                  Tensor& xg = tp.node(x).grad;
                  const std::size_t d = xg.dim(1);
                  for (std::size_t i = 0; i < batch; ++i) {
                    kernels::active().axpy(1.0,
                                           self.grad.data() + i * total + off,
                                           xg.data() + i * d, d);
                  }
                  off += d;
                }
              });
}

NodeId Tape::linear(NodeId w, NodeId b, NodeId x) {
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  const Tensor& xv = value(x);
  if (wv.ndim() != 2 || xv.ndim() != 2 || wv.dim(1) != xv.dim(1))
    shape_error("linear", wv, xv);
  if (bv.numel() != wv.dim(0)) shape_error("linear(bias)", wv, bv);
  const std::size_t batch = xv.dim(0), out_d = wv.dim(0), in_d = wv.dim(1);
  Tensor out({batch, out_d});
  kernels::matmul_nt(xv.data(), wv.data(), out.data(), batch, out_d, in_d);
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::active().axpy(1.0, bv.data(), out.data() + i * out_d, out_d);
  }
  return push(std::move(out),
              [w, b, x, batch, out_d, in_d](Tape& tp, Node& self) {
                const double* g = self.grad.data();
                kernels::matmul_nn_acc(g, tp.value(w).data(),
                                       tp.node(x).grad.data(), batch, in_d,
                                       out_d);
                kernels::matmul_tn_acc(g, tp.value(x).data(),
                                       tp.node(w).grad.data(), out_d, in_d,
                                       batch);
                double* bg = tp.node(b).grad.data();
                for (std::size_t i = 0; i < batch; ++i) {
                  kernels::active().axpy(1.0, g + i * out_d, bg, out_d);
                }
              });
}

NodeId Tape::tanh(NodeId x) {
  Tensor out = value(x);
  for (auto& v : out.values()) v = std::tanh(v);
  return push(std::move(out), [x](Tape& tp, Node& self) {
    Tensor& xg = tp.node(x).grad;
    const Tensor& y = *self.val;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      xg[i] += self.grad[i] * (1.0 - y[i] * y[i]);
    }
  });
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(1))
    shape_error("matmul_nt", av, bv);
  const std::size_t m = av.dim(0), n = bv.dim(0), k = av.dim(1);
  Tensor out({m, n});
  kernels::matmul_nt(av.data(), bv.data(), out.data(), m, n, k);
  return push(std::move(out), [a, b, m, n, k](Tape& tp, Node& self) {
    const double* g = self.grad.data();
    kernels::matmul_nn_acc(g, tp.value(b).data(), tp.node(a).grad.data(), m, k,
                           n);
    kernels::matmul_tn_acc(g, tp.value(a).data(), tp.node(b).grad.data(), n, k,
                           m);
  });
}

NodeId Tape::add_constant(NodeId x, const Tensor& c) {
  const Tensor& xv = value(x);
  if (!xv.same_shape(c)) shape_error("add_constant", xv, c);
  Tensor out = xv;
  kernels::active().axpy(1.0, c.data(), out.data(), out.numel());
  return push(std::move(out), [x](Tape& tp, Node& self) {
    kernels::active().axpy(1.0, self.grad.data(), tp.node(x).grad.data(),
                           self.grad.numel());
  });
}

NodeId Tape::sparse_rows_mix(NodeId w,
                             const std::vector<const SparseVec*>& batch) {
  const Tensor& wv = value(w);
  if (wv.ndim() != 2) throw std::invalid_argument("sparse_rows_mix: W not 2-d");
  const std::size_t d = wv.dim(1), rows = wv.dim(0);
  Tensor out({batch.size(), d});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const auto& [o, f] : *batch[i]) {
      if (o >= rows) throw std::out_of_range("sparse_rows_mix: id out of range");
      kernels::active().axpy(f, wv.data() + o * d, out.data() + i * d, d);
    }
  }
  return push(std::move(out), [w, batch, d](Tape& tp, Node& self) {
    Tensor& wg = tp.node(w).grad;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (const auto& [o, f] : *batch[i]) {
        kernels::active().axpy(f, self.grad.data() + i * d, wg.data() + o * d,
                               d);
      }
    }
  });
}

NodeId Tape::l2_normalize_rows(NodeId x, double eps) {
  const Tensor& xv = value(x);
  if (xv.ndim() != 2) throw std::invalid_argument("l2_normalize_rows: not 2-d");
  const std::size_t batch = xv.dim(0), d = xv.dim(1);
  Tensor out({batch, d});
  auto denoms = std::make_shared<std::vector<double>>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* xi = xv.data() + i * d;
    const double norm = std::sqrt(kernels::active().dot(xi, xi, d));
    const double denom = norm + eps;
    (*denoms)[i] = denom;
    kernels::active().scale(1.0 / denom, xi, out.data() + i * d, d);
  }
  return push(std::move(out), [x, denoms, eps, batch, d](Tape& tp,
                                                         Node& self) {
    Tensor& xg = tp.node(x).grad;
    const Tensor& xv = tp.value(x);
    for (std::size_t i = 0; i < batch; ++i) {
      const double* xi = xv.data() + i * d;
      const double* gi = self.grad.data() + i * d;
      const double denom = (*denoms)[i];
      const double norm = denom - eps;
      kernels::active().axpy(1.0 / denom, gi, xg.data() + i * d, d);
      if (norm > eps) {
        const double gx = kernels::active().dot(gi, xi, d);
        kernels::active().axpy(-gx / (norm * denom * denom), xi,
                               xg.data() + i * d, d);
      }
    }
  });
}

NodeId Tape::copy_ce_loss(NodeId h_his, NodeId h_nhis,
                          const std::vector<std::uint32_t>& true_ids) {
  if (h_his == kNoNode && h_nhis == kNoNode)
    throw std::invalid_argument("copy_ce_loss: both heads absent");
  std::vector<NodeId> heads;
  if (h_his != kNoNode) heads.push_back(h_his);
  if (h_nhis != kNoNode) heads.push_back(h_nhis);

  const Tensor& h0 = value(heads[0]);
  const std::size_t batch = h0.dim(0), num_e = h0.dim(1);
  if (true_ids.size() != batch)
    throw std::invalid_argument("copy_ce_loss: label/batch size mismatch");

  // per-head softmax rows, kept for backward
  auto probs = std::make_shared<std::vector<Tensor>>();
  for (auto h : heads) {
    const Tensor& hv = value(h);
    if (!hv.same_shape(h0)) shape_error("copy_ce_loss", h0, hv);
    Tensor p({batch, num_e});
    for (std::size_t i = 0; i < batch; ++i) {
      auto row = softmax_row(hv.row(i));
      std::copy(row.begin(), row.end(), p.data() + i * num_e);
    }
    probs->push_back(std::move(p));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    double t = 0.0;
    for (const auto& p : *probs) t += p.at(i, true_ids[i]);
    loss -= std::log(std::max(t, kLogEps));
  }
  return push(Tensor::scalar(loss),
              [heads, probs, true_ids, batch, num_e](Tape& tp, Node& self) {
                const double g = self.grad[0];
                for (std::size_t hi = 0; hi < heads.size(); ++hi) {
                  Tensor& hg = tp.node(heads[hi]).grad;
                  const Tensor& p = (*probs)[hi];
                  for (std::size_t i = 0; i < batch; ++i) {
                    double t = 0.0;
                    for (const auto& q : *probs) t += q.at(i, true_ids[i]);
                    t = std::max(t, kLogEps);
                    const double po = p.at(i, true_ids[i]);
                    const double coef = -g * po / t;
                    // d/dh_j softmax[o] = softmax[o]·(δ_jo − softmax[j])
                    kernels::active().axpy(-coef, p.data() + i * num_e,
                                           hg.data() + i * num_e, num_e);
                    hg.at(i, true_ids[i]) += coef;
                  }
                }
              });
}

NodeId Tape::supcon_loss(NodeId v, const std::vector<std::uint8_t>& labels,
                         double tau) {
  const Tensor& vv = value(v);
  const std::size_t batch = vv.dim(0), d = vv.dim(1);
  if (labels.size() != batch)
    throw std::invalid_argument("supcon_loss: label/batch size mismatch");
  if (batch < 2) {
    ++skipped_supcon_batches;
    return constant(Tensor::scalar(0.0));
  }
  // similarity logits s_qa = v_q·v_a / τ
  auto sim = std::make_shared<Tensor>(
      std::vector<std::size_t>{batch, batch});
  kernels::matmul_nt(vv.data(), vv.data(), sim->data(), batch, batch, d);
  for (auto& s : sim->values()) s /= tau;

  auto pos_count = std::make_shared<std::vector<std::size_t>>(batch, 0);
  for (std::size_t q = 0; q < batch; ++q) {
    for (std::size_t a = 0; a < batch; ++a) {
      if (a != q && labels[a] == labels[q]) ++(*pos_count)[q];
    }
  }
  double loss = 0.0;
  for (std::size_t q = 0; q < batch; ++q) {
    if ((*pos_count)[q] == 0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < batch; ++a) {
      if (a != q) mx = std::max(mx, sim->at(q, a));
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < batch; ++a) {
      if (a != q) denom += std::exp(sim->at(q, a) - mx);
    }
    const double lse = mx + std::log(denom);
    double acc = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
      if (k != q && labels[k] == labels[q]) acc += sim->at(q, k) - lse;
    }
    loss -= acc / static_cast<double>((*pos_count)[q]);
  }
  return push(
      Tensor::scalar(loss),
      [v, sim, pos_count, labels, tau, batch, d](Tape& tp, Node& self) {
        const double g = self.grad[0];
        // dL/ds_qa = (1/τ)(softmax_q(a) − [a∈Q(q)]/|Q(q)|) for live anchors
        Tensor gs({batch, batch});
        for (std::size_t q = 0; q < batch; ++q) {
          if ((*pos_count)[q] == 0) continue;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t a = 0; a < batch; ++a) {
            if (a != q) mx = std::max(mx, sim->at(q, a));
          }
          double denom = 0.0;
          for (std::size_t a = 0; a < batch; ++a) {
            if (a != q) denom += std::exp(sim->at(q, a) - mx);
          }
          const double inv_pos = 1.0 / static_cast<double>((*pos_count)[q]);
          for (std::size_t a = 0; a < batch; ++a) {
            if (a == q) continue;
            const double p = std::exp(sim->at(q, a) - mx) / denom;
            double val = p;
            if (labels[a] == labels[q]) val -= inv_pos;
            gs.at(q, a) = g * val / tau;
          }
        }
        // dV = (G + G^T)·V
        const Tensor& vv = tp.value(v);
        Tensor& vg = tp.node(v).grad;
        kernels::matmul_nn_acc(gs.data(), vv.data(), vg.data(), batch, d,
                               batch);
        kernels::matmul_tn_acc(gs.data(), vv.data(), vg.data(), batch, d,
                               batch);
      });
}

NodeId Tape::bce_with_logits(NodeId z, const std::vector<std::uint8_t>& labels) {
  const Tensor& zv = value(z);
  const std::size_t batch = zv.numel();
  if (labels.size() != batch)
    throw std::invalid_argument("bce_with_logits: label/batch size mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double x = zv[i];
    const double y = labels[i] ? 1.0 : 0.0;
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  return push(Tensor::scalar(loss), [z, labels, batch](Tape& tp, Node& self) {
    const double g = self.grad[0];
    const Tensor& zv = tp.value(z);
    Tensor& zg = tp.node(z).grad;
    for (std::size_t i = 0; i < batch; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-zv[i]));
      zg[i] += g * (s - (labels[i] ? 1.0 : 0.0));
    }
  });
}

NodeId Tape::affine_combine(double a, NodeId x, double b, NodeId y) {
  if (value(x).numel() != 1 || value(y).numel() != 1)
    throw std::invalid_argument("affine_combine: expects scalar nodes");
  return push(Tensor::scalar(a * value(x)[0] + b * value(y)[0]),
              [a, x, b, y](Tape& tp, Node& self) {
                tp.node(x).grad[0] += a * self.grad[0];
                tp.node(y).grad[0] += b * self.grad[0];
              });
}

NodeId Tape::sum(NodeId x) {
  double acc = 0.0;
  for (double v : value(x).values()) acc += v;
  return push(Tensor::scalar(acc), [x](Tape& tp, Node& self) {
    Tensor& xg = tp.node(x).grad;
    for (auto& v : xg.values()) v += self.grad[0];
  });
}

void Tape::backward(NodeId loss) {
  if (value(loss).numel() != 1)
    throw std::invalid_argument("backward: loss is not a scalar");
  for (auto& n : nodes_) {
    n->grad = Tensor::zeros(n->val->shape());
  }
  nodes_[loss]->grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = *nodes_[i];
    if (n.back) n.back(*this, n);
  }
  for (auto& n : nodes_) {
    if (n->param != nullptr && !n->param->frozen) {
      kernels::active().axpy(1.0, n->grad.data(), n->param->grad.data(),
                             n->grad.numel());
    }
  }
}

}  // namespace cenet::ad
