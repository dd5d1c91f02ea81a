#include "magdiff/grad_suite.hpp"

#include "magdiff/attention.hpp"
#include "magdiff/ops.hpp"
#include "magdiff/unet.hpp"
#include "magdiff/vae.hpp"

namespace magdiff {

namespace {

using Td = Tensor<double>;

Td randn(Rng& rng, const Shape& s) { return Td(s, rng.normal_vector<double>(shape_numel(s))); }

// Values at least `gap` away from 0 and 1 so clamp is smooth under the FD step.
Td away_from_bounds(Rng& rng, const Shape& s, double gap) {
  auto v = rng.uniform_vector<double>(shape_numel(s), -0.5, 1.5);
  for (auto& x : v) {
    for (double edge : {0.0, 1.0})
      if (std::abs(x - edge) < gap) x = edge + (x < edge ? -gap : gap);
  }
  return Td(s, std::move(v));
}

// sum(f(x) * w) for a fixed random w, so every output element carries a distinct weight.
std::function<Td(const Td&)> weighted(std::function<Td(const Td&)> f, const Td& w) {
  return [f = std::move(f), w](const Td& x) { return mul(f(x), w); };
}

DenoiserConfig toy_config() {
  DenoiserConfig c;
  c.base_channels = 8;
  c.mid_channels = 16;
  c.groups = 4;
  c.time_dim = 8;
  c.text_width = 8;
  c.max_tokens = 4;
  c.image_tokens = 4;
  c.max_frames = 2;
  c.vocab_size = 10;
  return c;
}

}  // namespace

std::vector<GradSuiteCase> grad_check_suite(const GradCheckOptions& opts,
                                            const std::function<void(const GradSuiteCase&)>& on_case) {
  std::vector<GradSuiteCase> out;
  Rng rng(opts.seed ^ 0x67726164ULL);
  auto record = [&](const std::string& name, GradCheckReport r) {
    out.push_back({name, std::move(r)});
    if (on_case) on_case(out.back());
  };
  auto unary = [&](const std::string& name, std::function<Td(const Td&)> f, Td x, const Shape& out_shape) {
    record(name, grad_check(weighted(std::move(f), randn(rng, out_shape)), std::move(x), opts));
  };

  {
    auto b = randn(rng, {3, 4});
    unary("add", [b](const Td& x) { return add(x, b); }, randn(rng, {3, 4}), {3, 4});
    unary("sub", [b](const Td& x) { return sub(b, x); }, randn(rng, {3, 4}), {3, 4});
    unary("mul", [b](const Td& x) { return mul(x, mul(x, b)); }, randn(rng, {3, 4}), {3, 4});
    auto s = randn(rng, {1});
    auto a = randn(rng, {3, 3});
    record("mul.scalar_broadcast", grad_check([&] { return sum(mul(mul(a, s), a)); }, {{"s", s}, {"a", a}}, opts));
  }
  unary("scale", [](const Td& x) { return scale(x, 1.7); }, randn(rng, {6}), {6});
  unary("add_scalar", [](const Td& x) { return mul(add_scalar(x, 0.3), x); }, randn(rng, {6}), {6});
  unary("silu", [](const Td& x) { return silu(x); }, randn(rng, {12}), {12});
  unary("gelu", [](const Td& x) { return gelu(x); }, randn(rng, {12}), {12});
  unary("clamp", [](const Td& x) { return clamp(x, 0.0, 1.0); }, away_from_bounds(rng, {12}, 0.01), {12});
  {
    auto bias = randn(rng, {3});
    auto x = randn(rng, {2, 3});
    record("add_bias", grad_check([&] { auto y = add_bias(x, bias); return sum(mul(y, y)); },
                                  {{"x", x}, {"bias", bias}}, opts));
    auto ch = randn(rng, {2, 3});
    auto xc = randn(rng, {2, 3, 2});
    record("add_channel", grad_check([&] { auto y = add_channel(xc, ch); return sum(mul(y, y)); },
                                     {{"x", xc}, {"ch", ch}}, opts));
  }
  record("sum", grad_check([](const Td& x) { auto s = sum(x); return mul(s, s); }, randn(rng, {5}), opts));
  record("mean", grad_check([](const Td& x) { auto m = mean(x); return mul(m, m); }, randn(rng, {5}), opts));
  {
    auto p = randn(rng, {3, 3});
    auto t = randn(rng, {3, 3});
    record("mse_loss", grad_check([&] { return mse_loss(p, t); }, {{"pred", p}, {"target", t}}, opts));
  }
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = randn(rng, ta ? Shape{2, 4, 3} : Shape{2, 3, 4});
      auto b = randn(rng, tb ? Shape{2, 5, 4} : Shape{2, 4, 5});
      auto w = randn(rng, {2, 3, 5});
      record(std::string("matmul.") + (ta ? "t" : "n") + (tb ? "t" : "n"),
             grad_check([&] { return sum(mul(matmul(a, b, ta, tb), w)); }, {{"a", a}, {"b", b}}, opts));
    }
  }
  {
    auto x = randn(rng, {2, 3, 4});
    auto shared = randn(rng, {4, 2});
    record("matmul.shared_rhs", grad_check([&] { auto y = matmul(x, shared); return sum(mul(y, y)); },
                                           {{"x", x}, {"w", shared}}, opts));
  }
  {
    auto x = randn(rng, {2, 2, 5, 5});
    auto w = randn(rng, {3, 2, 3, 3});
    auto b = randn(rng, {3});
    record("conv2d", grad_check([&] {
             auto y = conv(x, w, std::optional<Td>(b), {{2, 2}, {1, 1}});
             return sum(mul(y, y));
           }, {{"x", x}, {"w", w}, {"b", b}}, opts));
    auto x3 = randn(rng, {1, 2, 3, 2, 2});
    auto w3 = randn(rng, {2, 2, 3, 1, 1});
    record("conv3d.temporal", grad_check([&] {
             auto y = conv(x3, w3, std::optional<Td>{}, {{1, 1, 1}, {1, 0, 0}});
             return sum(mul(y, y));
           }, {{"x", x3}, {"w", w3}}, opts));
  }
  unary("softmax", [](const Td& x) { return softmax(x, 1); }, randn(rng, {3, 5}), {3, 5});
  {
    auto x = randn(rng, {2, 4, 2, 2});
    auto g = randn(rng, {4});
    auto b = randn(rng, {4});
    auto w = randn(rng, {2, 4, 2, 2});
    record("group_norm", grad_check([&] { return sum(mul(group_norm(x, 2, g, b), w)); },
                                    {{"x", x}, {"gamma", g}, {"beta", b}}, opts));
  }
  unary("reshape", [](const Td& x) { return reshape(x, {3, 4}); }, randn(rng, {2, 6}), {3, 4});
  unary("permute", [](const Td& x) { return permute(x, {1, 2, 0}); }, randn(rng, {2, 4, 3}), {4, 3, 2});
  {
    auto a = randn(rng, {2, 3});
    auto b = randn(rng, {2, 2});
    auto w = randn(rng, {2, 5});
    record("concat", grad_check([&] { return sum(mul(concat<double>({a, b}, 1), w)); }, {{"a", a}, {"b", b}}, opts));
  }
  unary("slice", [](const Td& x) { return slice(x, 1, 1, 3); }, randn(rng, {2, 4}), {2, 2});
  unary("repeat_interleave", [](const Td& x) { return repeat_interleave(x, 3); }, randn(rng, {2, 2}), {6, 2});
  {
    auto table = randn(rng, {5, 3});
    auto w = randn(rng, {4, 3});
    record("embedding", grad_check([&] { return sum(mul(embedding(table, {4, 0, 4, 2}), w)); },
                                   {{"table", table}}, opts));
  }
  unary("resample2d.area", [](const Td& x) { return resample2d(x, 3, 5, ResampleMode::kArea); },
        randn(rng, {1, 2, 4, 4}), {1, 2, 3, 5});
  unary("resample2d.nearest", [](const Td& x) { return resample2d(x, 6, 6, ResampleMode::kNearest); },
        randn(rng, {1, 1, 4, 4}), {1, 1, 6, 6});
  {
    auto q = randn(rng, {2, 3, 4});
    auto k = randn(rng, {2, 5, 4});
    auto v = randn(rng, {2, 5, 4});
    auto w = randn(rng, {2, 3, 4});
    record("scaled_dot_attention", grad_check([&] { return sum(mul(scaled_dot_attention(q, k, v, 2), w)); },
                                              {{"q", q}, {"k", k}, {"v", v}}, opts));
  }

  {
    Vae<double> vae(opts.seed + 1);
    auto x = Td({2, 3, 8, 8}, rng.uniform_vector<double>(2 * 3 * 64, 0.0, 1.0));
    std::vector<std::pair<std::string, Td>> inputs;
    for (const auto& e : vae.params().entries())
      if (e.name != "vae.latent_scale") inputs.emplace_back(e.name, e.tensor);
    record("vae.reconstruction", grad_check([&] { return mse_loss(vae.decode_raw(vae.encode(x)), x); }, inputs, opts));
  }

  {
    const auto cfg = toy_config();
    Denoiser<double> net(cfg, opts.seed + 2);
    net.apply_freeze_policy("train-all");
    const std::size_t t = 2, c = cfg.latent_channels, hw = 4;
    auto z_noisy = randn(rng, {t, c, hw, hw});
    auto feat = randn(rng, {t, cfg.hfa_channels, hw, hw});
    auto target = randn(rng, {1, t, c, hw, hw});
    auto images = Td({1, 3, 16, 16}, rng.uniform_vector<double>(3 * 256, 0.0, 1.0));
    const std::vector<std::uint8_t> present{1, 1};
    auto loss = [&] {
      auto z_s = net.hfa_fusion()(feat, present);
      auto z_in = reshape(concat<double>({z_noisy, z_s}, 1), {1, t, 2 * c, hw, hw});
      Conditioning<double> cond{net.embed_text_batch({{3, 5, 7}}), net.image_tokens(images)};
      return mse_loss(net.forward(z_in, {321.0}, cond), target);
    };
    std::vector<std::pair<std::string, Td>> inputs;
    for (const auto& e : net.params().entries()) inputs.emplace_back(e.name, e.tensor);
    inputs.emplace_back("input.z_noisy", z_noisy);
    record("denoiser.forward_loss", grad_check(loss, inputs, opts));
  }
  return out;
}

}  // namespace magdiff
