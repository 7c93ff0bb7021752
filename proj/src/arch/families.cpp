#include "truncnet/arch/families.hpp"

#include <cmath>
#include <map>
#include <regex>

#include "truncnet/core/errors.hpp"
#include "truncnet/nn/nn.hpp"

namespace truncnet {
namespace {

using nn::ActKind;
using nn::ConvOptions;
using nn::ModulePtr;

template <typename T>
std::unique_ptr<nn::Conv2d<T>> conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1,
                                    std::int64_t groups = 1, bool bias = false) {
  return std::make_unique<nn::Conv2d<T>>(ConvOptions::square(in, out, k, stride, groups, bias));
}

template <typename T>
std::unique_ptr<nn::BatchNorm2d<T>> bn(std::int64_t c, double eps = 1e-5, double momentum = 0.1) {
  return std::make_unique<nn::BatchNorm2d<T>>(c, eps, momentum);
}

template <typename T>
std::unique_ptr<nn::Activation<T>> act(ActKind kind) {
  return std::make_unique<nn::Activation<T>>(kind);
}

template <typename T>
std::unique_ptr<nn::Identity<T>> identity() {
  return std::make_unique<nn::Identity<T>>();
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> seq() {
  return std::make_unique<nn::Sequential<T>>();
}

/// Wraps `body` with an identity shortcut when `skip` holds.
template <typename T>
ModulePtr<T> maybe_residual(std::unique_ptr<nn::Sequential<T>> body, bool skip) {
  if (!skip) return body;
  auto sum = std::make_unique<nn::Sum<T>>();
  sum->add("", std::move(body));
  sum->add("", identity<T>());
  return sum;
}

/// Collects units in order; groups are assigned afterwards from the tail.
template <typename T>
class RecipeList {
 public:
  void add(std::string id, UnitKind kind, std::int64_t out, int downsample, std::function<ModulePtr<T>()> make) {
    items_.push_back({BlockUnit{std::move(id), kind, std::nullopt, out, downsample}, std::move(make)});
  }

  /// groups[0] lists the unit ids of group 1 (removed first), and so on.
  void assign_groups(const std::vector<std::vector<std::string>>& groups) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (const auto& id : groups[g]) {
        auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& r) { return r.unit.unit_id == id; });
        if (it == items_.end()) throw NotFoundError("group member '" + id + "' is not a unit");
        it->unit.removable_group = static_cast<int>(g + 1);
      }
    }
  }

  std::vector<UnitRecipe<T>> take() { return std::move(items_); }

 private:
  std::vector<UnitRecipe<T>> items_;
};

// ---------------------------------------------------------------- DenseNet

template <typename T>
ModulePtr<T> dense_layer(std::int64_t in, std::int64_t growth, std::int64_t bn_size) {
  auto layer = std::make_unique<nn::Concat<T>>();
  layer->add("", identity<T>());
  auto& body = layer->add("", seq<T>());
  body.add("norm1", bn<T>(in));
  body.add("relu1", act<T>(ActKind::kRelu));
  body.add("conv1", conv<T>(in, bn_size * growth, 1));
  body.add("norm2", bn<T>(bn_size * growth));
  body.add("relu2", act<T>(ActKind::kRelu));
  body.add("conv2", conv<T>(bn_size * growth, growth, 3));
  return layer;
}

template <typename T>
std::vector<UnitRecipe<T>> densenet(const std::string& variant) {
  static const std::map<std::string, std::vector<int>> configs = {
      {"121", {6, 12, 24, 16}}, {"169", {6, 12, 32, 32}}, {"201", {6, 12, 48, 32}}};
  const auto it = configs.find(variant);
  if (it == configs.end()) throw NotFoundError("unknown DenseNet variant '" + variant + "'");
  const auto blocks = it->second;
  constexpr std::int64_t growth = 32, bn_size = 4, init = 64;

  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, init, 2, [] {
    auto s = seq<T>();
    s->add("conv0", std::make_unique<nn::Conv2d<T>>(ConvOptions::square(3, init, 7, 2)));
    s->add("norm0", bn<T>(init));
    s->add("relu0", act<T>(ActKind::kRelu));
    s->add("pool0", std::make_unique<nn::MaxPool2d<T>>(nn::PoolOptions{3, 2, 1}));
    return s;
  });
  std::int64_t channels = init;
  int downsample = 2;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto in = channels;
    const int layers = blocks[b];
    const bool last = b + 1 == blocks.size();
    channels = in + layers * growth;
    list.add("denseblock" + std::to_string(b + 1), UnitKind::kDenseBlock, channels, downsample, [=] {
      auto s = seq<T>();
      for (int l = 0; l < layers; ++l) s->add("denselayer" + std::to_string(l + 1), dense_layer<T>(in + l * growth, growth, bn_size));
      if (last) {
        s->add("norm5", bn<T>(in + layers * growth));
        s->add("relu5", act<T>(ActKind::kRelu));
      }
      return s;
    });
    if (!last) {
      const auto c = channels;
      ++downsample;
      list.add("transition" + std::to_string(b + 1), UnitKind::kTransition, c / 2, downsample, [=] {
        auto s = seq<T>();
        s->add("norm", bn<T>(c));
        s->add("relu", act<T>(ActKind::kRelu));
        s->add("conv", conv<T>(c, c / 2, 1));
        s->add("pool", std::make_unique<nn::AvgPool2d<T>>(nn::PoolOptions{2, 2, 0}));
        return s;
      });
      channels = c / 2;
    }
  }
  list.assign_groups({{"transition3", "denseblock4"}, {"transition2", "denseblock3"}, {"transition1", "denseblock2"}});
  return list.take();
}

// ------------------------------------------------------------------ ResNet

template <typename T>
ModulePtr<T> basic_block(std::int64_t in, std::int64_t planes, std::int64_t stride) {
  auto block = seq<T>();
  auto& sum = block->add("", std::make_unique<nn::Sum<T>>());
  auto& body = sum.add("", seq<T>());
  body.add("conv1", conv<T>(in, planes, 3, stride));
  body.add("bn1", bn<T>(planes));
  body.add("relu", act<T>(ActKind::kRelu));
  body.add("conv2", conv<T>(planes, planes, 3));
  body.add("bn2", bn<T>(planes));
  if (stride != 1 || in != planes) {
    auto& down = sum.add("downsample", seq<T>());
    down.add("0", conv<T>(in, planes, 1, stride));
    down.add("1", bn<T>(planes));
  } else {
    sum.add("", identity<T>());
  }
  block->add("relu", act<T>(ActKind::kRelu));
  return block;
}

template <typename T>
ModulePtr<T> bottleneck(std::int64_t in, std::int64_t planes, std::int64_t stride) {
  constexpr std::int64_t expansion = 4;
  auto block = seq<T>();
  auto& sum = block->add("", std::make_unique<nn::Sum<T>>());
  auto& body = sum.add("", seq<T>());
  body.add("conv1", conv<T>(in, planes, 1));
  body.add("bn1", bn<T>(planes));
  body.add("relu1", act<T>(ActKind::kRelu));
  body.add("conv2", conv<T>(planes, planes, 3, stride));
  body.add("bn2", bn<T>(planes));
  body.add("relu2", act<T>(ActKind::kRelu));
  body.add("conv3", conv<T>(planes, planes * expansion, 1));
  body.add("bn3", bn<T>(planes * expansion));
  if (stride != 1 || in != planes * expansion) {
    auto& down = sum.add("downsample", seq<T>());
    down.add("0", conv<T>(in, planes * expansion, 1, stride));
    down.add("1", bn<T>(planes * expansion));
  } else {
    sum.add("", identity<T>());
  }
  block->add("relu", act<T>(ActKind::kRelu));
  return block;
}

template <typename T>
std::vector<UnitRecipe<T>> resnet(const std::string& variant) {
  struct Config {
    std::vector<int> blocks;
    bool bottleneck;
  };
  static const std::map<std::string, Config> configs = {{"18", {{2, 2, 2, 2}, false}},
                                                        {"34", {{3, 4, 6, 3}, false}},
                                                        {"50", {{3, 4, 6, 3}, true}},
                                                        {"101", {{3, 4, 23, 3}, true}}};
  const auto it = configs.find(variant);
  if (it == configs.end()) throw NotFoundError("unknown ResNet variant '" + variant + "'");
  const auto cfg = it->second;

  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 64, 2, [] {
    auto s = seq<T>();
    s->add("conv1", std::make_unique<nn::Conv2d<T>>(ConvOptions::square(3, 64, 7, 2)));
    s->add("bn1", bn<T>(64));
    s->add("relu", act<T>(ActKind::kRelu));
    s->add("maxpool", std::make_unique<nn::MaxPool2d<T>>(nn::PoolOptions{3, 2, 1}));
    return s;
  });
  const std::int64_t expansion = cfg.bottleneck ? 4 : 1;
  std::int64_t in = 64;
  for (int stage = 0; stage < 4; ++stage) {
    const std::int64_t planes = 64LL << stage;
    const std::int64_t stride = stage == 0 ? 1 : 2;
    const int count = cfg.blocks[static_cast<std::size_t>(stage)];
    const auto stage_in = in;
    list.add("layer" + std::to_string(stage + 1), UnitKind::kResidualStage, planes * expansion, 2 + stage, [=] {
      auto s = seq<T>();
      std::int64_t c = stage_in;
      for (int b = 0; b < count; ++b) {
        const auto st = b == 0 ? stride : 1;
        s->add(std::to_string(b), cfg.bottleneck ? bottleneck<T>(c, planes, st) : basic_block<T>(c, planes, st));
        c = planes * expansion;
      }
      return s;
    });
    in = planes * expansion;
  }
  list.assign_groups({{"layer4"}, {"layer3"}, {"layer2"}});
  return list.take();
}

// ---------------------------------------------------- MBConv-style blocks

std::int64_t make_divisible(double v, std::int64_t divisor = 8) {
  auto rounded = std::max<std::int64_t>(divisor, static_cast<std::int64_t>(v + divisor / 2.0) / divisor * divisor);
  if (static_cast<double>(rounded) < 0.9 * v) rounded += divisor;
  return rounded;
}

struct MbConfig {
  std::int64_t in = 0;
  std::int64_t out = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  double expand = 1.0;
  std::int64_t se_reduced = 0;  // 0: no squeeze-excite
  ActKind act = ActKind::kRelu;
  ActKind gate = ActKind::kSigmoid;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

/// Expansion 1x1 (when expand != 1), depthwise kxk, optional SE, projection.
/// Layer names follow the timm implementation.
template <typename T>
ModulePtr<T> mbconv(const MbConfig& c, bool depthwise_separable) {
  auto body = seq<T>();
  if (depthwise_separable) {
    body->add("conv_dw", conv<T>(c.in, c.in, c.kernel, c.stride, c.in));
    body->add("bn1", bn<T>(c.in, c.bn_eps, c.bn_momentum));
    body->add("act1", act<T>(c.act));
    if (c.se_reduced > 0) body->add("se", std::make_unique<nn::SqueezeExcite<T>>(c.in, c.se_reduced, c.act, c.gate));
    body->add("conv_pw", conv<T>(c.in, c.out, 1));
    body->add("bn2", bn<T>(c.out, c.bn_eps, c.bn_momentum));
  } else {
    const auto mid = make_divisible(static_cast<double>(c.in) * c.expand);
    body->add("conv_pw", conv<T>(c.in, mid, 1));
    body->add("bn1", bn<T>(mid, c.bn_eps, c.bn_momentum));
    body->add("act1", act<T>(c.act));
    body->add("conv_dw", conv<T>(mid, mid, c.kernel, c.stride, mid));
    body->add("bn2", bn<T>(mid, c.bn_eps, c.bn_momentum));
    body->add("act2", act<T>(c.act));
    if (c.se_reduced > 0) body->add("se", std::make_unique<nn::SqueezeExcite<T>>(mid, c.se_reduced, c.act, c.gate));
    body->add("conv_pwl", conv<T>(mid, c.out, 1));
    body->add("bn3", bn<T>(c.out, c.bn_eps, c.bn_momentum));
  }
  return maybe_residual<T>(std::move(body), c.stride == 1 && c.in == c.out);
}

// ------------------------------------------------------------ EfficientNet

template <typename T>
std::vector<UnitRecipe<T>> efficientnet(const std::string& variant) {
  struct Scale {
    double width;
    double depth;
  };
  static const std::map<std::string, Scale> scales = {
      {"B0", {1.0, 1.0}}, {"B1", {1.0, 1.1}}, {"B2", {1.1, 1.2}}, {"B3", {1.2, 1.4}}};
  const auto it = scales.find(variant);
  if (it == scales.end()) throw NotFoundError("unknown EfficientNet variant '" + variant + "'");
  const auto scale = it->second;
  auto width = [&](std::int64_t c) { return make_divisible(static_cast<double>(c) * scale.width); };
  auto depth = [&](int r) { return static_cast<int>(std::ceil(r * scale.depth)); };

  struct Stage {
    int repeats;
    std::int64_t kernel;
    std::int64_t stride;
    double expand;
    std::int64_t channels;
  };
  const std::vector<Stage> stages = {{1, 3, 1, 1, 16},  {2, 3, 2, 6, 24},  {2, 5, 2, 6, 40}, {3, 3, 2, 6, 80},
                                     {3, 5, 1, 6, 112}, {4, 5, 2, 6, 192}, {1, 3, 1, 6, 320}};

  RecipeList<T> list;
  const auto stem = width(32);
  list.add("stem", UnitKind::kStem, stem, 1, [=] {
    auto s = seq<T>();
    s->add("conv_stem", conv<T>(3, stem, 3, 2));
    s->add("bn1", bn<T>(stem));
    s->add("act1", act<T>(ActKind::kSilu));
    return s;
  });
  std::int64_t in = stem;
  int downsample = 1;
  const auto head_channels = width(1280);
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto st = stages[i];
    const auto out = width(st.channels);
    const int repeats = depth(st.repeats);
    if (st.stride == 2) ++downsample;
    const bool last = i + 1 == stages.size();
    const auto stage_in = in;
    list.add("stage" + std::to_string(i), UnitKind::kMbconvGroup, last ? head_channels : out, downsample, [=] {
      auto s = seq<T>();
      std::int64_t c = stage_in;
      for (int r = 0; r < repeats; ++r) {
        MbConfig cfg;
        cfg.in = c;
        cfg.out = out;
        cfg.kernel = st.kernel;
        cfg.stride = r == 0 ? st.stride : 1;
        cfg.expand = st.expand;
        cfg.se_reduced = std::max<std::int64_t>(1, static_cast<std::int64_t>(static_cast<double>(c) * 0.25));
        cfg.act = ActKind::kSilu;
        cfg.gate = ActKind::kSigmoid;
        s->add(std::to_string(r), mbconv<T>(cfg, st.expand == 1.0));
        c = out;
      }
      if (last) {
        s->add("conv_head", conv<T>(out, head_channels, 1));
        s->add("bn2", bn<T>(head_channels));
        s->add("act2", act<T>(ActKind::kSilu));
      }
      return s;
    });
    in = out;
  }
  list.assign_groups({{"stage6"}, {"stage5"}});
  return list.take();
}

// --------------------------------------------------------------- MobileNet

template <typename T>
std::vector<UnitRecipe<T>> mobilenet_v2() {
  struct Stage {
    double expand;
    std::int64_t channels;
    int repeats;
    std::int64_t stride;
  };
  const std::vector<Stage> stages = {{1, 16, 1, 1}, {6, 24, 2, 2},  {6, 32, 3, 2},  {6, 64, 4, 2},
                                     {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  // torchvision layout: features.N.conv.{0: ConvBNReLU6, 1: ConvBNReLU6, 2: conv, 3: bn}
  auto conv_bn_relu6 = [](std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride, std::int64_t groups) {
    auto s = seq<T>();
    s->add("0", conv<T>(in, out, k, stride, groups));
    s->add("1", bn<T>(out));
    s->add("2", act<T>(ActKind::kRelu6));
    return s;
  };
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 32, 1, [=] {
    auto s = seq<T>();
    s->add("0", conv_bn_relu6(3, 32, 3, 2, 1));
    return s;
  });
  std::int64_t in = 32;
  int downsample = 1;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto st = stages[i];
    if (st.stride == 2) ++downsample;
    const bool last = i + 1 == stages.size();
    const auto stage_in = in;
    list.add("stage" + std::to_string(i + 1), UnitKind::kMbconvGroup, last ? 1280 : st.channels, downsample, [=] {
      auto s = seq<T>();
      std::int64_t c = stage_in;
      for (int r = 0; r < st.repeats; ++r) {
        const auto stride = r == 0 ? st.stride : 1;
        const auto hidden = static_cast<std::int64_t>(std::llround(static_cast<double>(c) * st.expand));
        auto block = seq<T>();
        auto& layers = block->add("conv", seq<T>());
        int idx = 0;
        if (st.expand != 1.0) layers.add(std::to_string(idx++), conv_bn_relu6(c, hidden, 1, 1, 1));
        layers.add(std::to_string(idx++), conv_bn_relu6(hidden, hidden, 3, stride, hidden));
        layers.add(std::to_string(idx++), conv<T>(hidden, st.channels, 1));
        layers.add(std::to_string(idx++), bn<T>(st.channels));
        s->add(std::to_string(r), maybe_residual<T>(std::move(block), stride == 1 && c == st.channels));
        c = st.channels;
      }
      if (last) s->add("conv_head", conv_bn_relu6(st.channels, 1280, 1, 1, 1));
      return s;
    });
    in = st.channels;
  }
  return list.take();
}

template <typename T>
std::vector<UnitRecipe<T>> mobilenet_v3() {
  struct Block {
    bool depthwise_separable;
    std::int64_t kernel;
    std::int64_t stride;
    double expand;
    std::int64_t channels;
    bool se;
    ActKind act;
  };
  const auto relu = ActKind::kRelu;
  const auto hswish = ActKind::kHardSwish;
  const std::vector<std::vector<Block>> stages = {
      {{true, 3, 1, 1, 16, false, relu}},
      {{false, 3, 2, 4, 24, false, relu}, {false, 3, 1, 3, 24, false, relu}},
      {{false, 5, 2, 3, 40, true, relu}, {false, 5, 1, 3, 40, true, relu}, {false, 5, 1, 3, 40, true, relu}},
      {{false, 3, 2, 6, 80, false, hswish},
       {false, 3, 1, 2.5, 80, false, hswish},
       {false, 3, 1, 2.3, 80, false, hswish},
       {false, 3, 1, 2.3, 80, false, hswish}},
      {{false, 3, 1, 6, 112, true, hswish}, {false, 3, 1, 6, 112, true, hswish}},
      {{false, 5, 2, 6, 160, true, hswish}, {false, 5, 1, 6, 160, true, hswish}, {false, 5, 1, 6, 160, true, hswish}},
  };
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 16, 1, [] {
    auto s = seq<T>();
    s->add("conv_stem", conv<T>(3, 16, 3, 2));
    s->add("bn1", bn<T>(16));
    s->add("act1", act<T>(ActKind::kHardSwish));
    return s;
  });
  std::int64_t in = 16;
  int downsample = 1;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto blocks = stages[i];
    if (blocks.front().stride == 2) ++downsample;
    const auto stage_in = in;
    list.add("stage" + std::to_string(i), UnitKind::kMbconvGroup, blocks.back().channels, downsample, [=] {
      auto s = seq<T>();
      std::int64_t c = stage_in;
      for (std::size_t r = 0; r < blocks.size(); ++r) {
        const auto& b = blocks[r];
        MbConfig cfg;
        cfg.in = c;
        cfg.out = b.channels;
        cfg.kernel = b.kernel;
        cfg.stride = b.stride;
        cfg.expand = b.expand;
        const auto mid = b.depthwise_separable ? c : make_divisible(static_cast<double>(c) * b.expand);
        cfg.se_reduced = b.se ? make_divisible(static_cast<double>(mid) * 0.25) : 0;
        cfg.act = b.act;
        cfg.gate = ActKind::kHardSigmoid;
        s->add(std::to_string(r), mbconv<T>(cfg, b.depthwise_separable));
        c = b.channels;
      }
      return s;
    });
    in = blocks.back().channels;
  }
  // Final 1x1 expansion, then the pooled 1280-wide projection that precedes
  // the classifier in this architecture.
  list.add("stage6", UnitKind::kMbconvGroup, 1280, downsample, [] {
    auto s = seq<T>();
    auto& cba = s->add("0", seq<T>());
    cba.add("conv", conv<T>(160, 960, 1));
    cba.add("bn1", bn<T>(960));
    cba.add("act", act<T>(ActKind::kHardSwish));
    s->add("global_pool", std::make_unique<nn::GlobalAvgPool<T>>(true));
    s->add("conv_head", conv<T>(960, 1280, 1, 1, 1, true));
    s->add("act2", act<T>(ActKind::kHardSwish));
    return s;
  });
  return list.take();
}

// ----------------------------------------------------------------- MNASNet

template <typename T>
std::vector<UnitRecipe<T>> mnasnet(const std::string& variant) {
  if (variant != "1.0") throw NotFoundError("unknown MNASNet variant '" + variant + "'");
  constexpr double momentum = 1.0 - 0.9997;
  auto inverted_residual = [=](std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                               std::int64_t expand) {
    const auto mid = in * expand;
    auto block = seq<T>();
    auto& layers = block->add("layers", seq<T>());
    layers.add("0", conv<T>(in, mid, 1));
    layers.add("1", bn<T>(mid, 1e-5, momentum));
    layers.add("2", act<T>(ActKind::kRelu));
    layers.add("3", conv<T>(mid, mid, k, stride, mid));
    layers.add("4", bn<T>(mid, 1e-5, momentum));
    layers.add("5", act<T>(ActKind::kRelu));
    layers.add("6", conv<T>(mid, out, 1));
    layers.add("7", bn<T>(out, 1e-5, momentum));
    return maybe_residual<T>(std::move(block), in == out && stride == 1);
  };
  struct Stack {
    std::int64_t out;
    std::int64_t kernel;
    std::int64_t stride;
    std::int64_t expand;
    int repeats;
  };
  const std::vector<Stack> stacks = {{24, 3, 2, 3, 3}, {40, 5, 2, 3, 3},  {80, 5, 2, 6, 3},
                                     {96, 3, 1, 6, 2}, {192, 5, 2, 6, 4}, {320, 3, 1, 6, 1}};
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 16, 1, [=] {
    auto s = seq<T>();
    s->add("0", conv<T>(3, 32, 3, 2));
    s->add("1", bn<T>(32, 1e-5, momentum));
    s->add("2", act<T>(ActKind::kRelu));
    s->add("3", conv<T>(32, 32, 3, 1, 32));
    s->add("4", bn<T>(32, 1e-5, momentum));
    s->add("5", act<T>(ActKind::kRelu));
    s->add("6", conv<T>(32, 16, 1));
    s->add("7", bn<T>(16, 1e-5, momentum));
    return s;
  });
  std::int64_t in = 16;
  int downsample = 1;
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const auto st = stacks[i];
    if (st.stride == 2) ++downsample;
    const bool last = i + 1 == stacks.size();
    const auto stack_in = in;
    list.add("stack" + std::to_string(i + 1), UnitKind::kMbconvGroup, last ? 1280 : st.out, downsample, [=] {
      auto s = seq<T>();
      s->add("0", inverted_residual(stack_in, st.out, st.kernel, st.stride, st.expand));
      for (int r = 1; r < st.repeats; ++r) s->add(std::to_string(r), inverted_residual(st.out, st.out, st.kernel, 1, st.expand));
      if (last) {
        auto& head = s->add("conv_head", seq<T>());
        head.add("0", conv<T>(st.out, 1280, 1));
        head.add("1", bn<T>(1280, 1e-5, momentum));
        head.add("2", act<T>(ActKind::kRelu));
      }
      return s;
    });
    in = st.out;
  }
  list.assign_groups({{"stack6"}, {"stack5"}, {"stack4"}, {"stack3"}});
  return list.take();
}

// --------------------------------------------------------------- Inception

struct Kernel {
  std::int64_t kh, kw, sh = 1, sw = 1, ph = 0, pw = 0;
};

template <typename T>
std::unique_ptr<nn::Sequential<T>> basic_conv(std::int64_t in, std::int64_t out, Kernel k) {
  auto s = seq<T>();
  s->add("conv", std::make_unique<nn::Conv2d<T>>(ConvOptions{in, out, k.kh, k.kw, k.sh, k.sw, k.ph, k.pw, 1, false}));
  s->add("bn", bn<T>(out, 1e-3, 0.1));
  s->add("relu", act<T>(ActKind::kRelu));
  return s;
}

constexpr Kernel k1{1, 1};
constexpr Kernel k3{3, 3};
constexpr Kernel k3p{3, 3, 1, 1, 1, 1};
constexpr Kernel k3s2{3, 3, 2, 2};
constexpr Kernel k1x7{1, 7, 1, 1, 0, 3};
constexpr Kernel k7x1{7, 1, 1, 1, 3, 0};
constexpr Kernel k1x3{1, 3, 1, 1, 0, 1};
constexpr Kernel k3x1{3, 1, 1, 1, 1, 0};

template <typename T>
std::unique_ptr<nn::MaxPool2d<T>> max3s2() {
  return std::make_unique<nn::MaxPool2d<T>>(nn::PoolOptions{3, 2, 0});
}

template <typename T>
std::unique_ptr<nn::AvgPool2d<T>> avg3s1(bool count_include_pad) {
  return std::make_unique<nn::AvgPool2d<T>>(nn::PoolOptions{3, 1, 1, count_include_pad});
}

/// Sequential whose children are named "0", "1", ...
template <typename T, typename... Parts>
std::unique_ptr<nn::Sequential<T>> chain(Parts... parts) {
  auto s = seq<T>();
  int i = 0;
  (s->add(std::to_string(i++), std::move(parts)), ...);
  return s;
}

template <typename T>
ModulePtr<T> inception_a(std::int64_t in, std::int64_t pool_features) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", basic_conv<T>(in, 64, k1));
  auto& b5 = c->add("", seq<T>());
  b5.add("branch5x5_1", basic_conv<T>(in, 48, k1));
  b5.add("branch5x5_2", basic_conv<T>(48, 64, {5, 5, 1, 1, 2, 2}));
  auto& b3 = c->add("", seq<T>());
  b3.add("branch3x3dbl_1", basic_conv<T>(in, 64, k1));
  b3.add("branch3x3dbl_2", basic_conv<T>(64, 96, k3p));
  b3.add("branch3x3dbl_3", basic_conv<T>(96, 96, k3p));
  auto& bp = c->add("", seq<T>());
  bp.add("", avg3s1<T>(true));
  bp.add("branch_pool", basic_conv<T>(in, pool_features, k1));
  return c;
}

template <typename T>
ModulePtr<T> inception_b(std::int64_t in) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch3x3", basic_conv<T>(in, 384, k3s2));
  auto& b3 = c->add("", seq<T>());
  b3.add("branch3x3dbl_1", basic_conv<T>(in, 64, k1));
  b3.add("branch3x3dbl_2", basic_conv<T>(64, 96, k3p));
  b3.add("branch3x3dbl_3", basic_conv<T>(96, 96, k3s2));
  c->add("", max3s2<T>());
  return c;
}

template <typename T>
ModulePtr<T> inception_c(std::int64_t in, std::int64_t c7) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", basic_conv<T>(in, 192, k1));
  auto& b7 = c->add("", seq<T>());
  b7.add("branch7x7_1", basic_conv<T>(in, c7, k1));
  b7.add("branch7x7_2", basic_conv<T>(c7, c7, k1x7));
  b7.add("branch7x7_3", basic_conv<T>(c7, 192, k7x1));
  auto& bd = c->add("", seq<T>());
  bd.add("branch7x7dbl_1", basic_conv<T>(in, c7, k1));
  bd.add("branch7x7dbl_2", basic_conv<T>(c7, c7, k7x1));
  bd.add("branch7x7dbl_3", basic_conv<T>(c7, c7, k1x7));
  bd.add("branch7x7dbl_4", basic_conv<T>(c7, c7, k7x1));
  bd.add("branch7x7dbl_5", basic_conv<T>(c7, 192, k1x7));
  auto& bp = c->add("", seq<T>());
  bp.add("", avg3s1<T>(true));
  bp.add("branch_pool", basic_conv<T>(in, 192, k1));
  return c;
}

template <typename T>
ModulePtr<T> inception_d(std::int64_t in) {
  auto c = std::make_unique<nn::Concat<T>>();
  auto& b3 = c->add("", seq<T>());
  b3.add("branch3x3_1", basic_conv<T>(in, 192, k1));
  b3.add("branch3x3_2", basic_conv<T>(192, 320, k3s2));
  auto& b7 = c->add("", seq<T>());
  b7.add("branch7x7x3_1", basic_conv<T>(in, 192, k1));
  b7.add("branch7x7x3_2", basic_conv<T>(192, 192, k1x7));
  b7.add("branch7x7x3_3", basic_conv<T>(192, 192, k7x1));
  b7.add("branch7x7x3_4", basic_conv<T>(192, 192, k3s2));
  c->add("", max3s2<T>());
  return c;
}

template <typename T>
ModulePtr<T> inception_e(std::int64_t in) {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch1x1", basic_conv<T>(in, 320, k1));
  auto& b3 = c->add("", seq<T>());
  b3.add("branch3x3_1", basic_conv<T>(in, 384, k1));
  auto& b3split = b3.add("", std::make_unique<nn::Concat<T>>());
  b3split.add("branch3x3_2a", basic_conv<T>(384, 384, k1x3));
  b3split.add("branch3x3_2b", basic_conv<T>(384, 384, k3x1));
  auto& bd = c->add("", seq<T>());
  bd.add("branch3x3dbl_1", basic_conv<T>(in, 448, k1));
  bd.add("branch3x3dbl_2", basic_conv<T>(448, 384, k3p));
  auto& bdsplit = bd.add("", std::make_unique<nn::Concat<T>>());
  bdsplit.add("branch3x3dbl_3a", basic_conv<T>(384, 384, k1x3));
  bdsplit.add("branch3x3dbl_3b", basic_conv<T>(384, 384, k3x1));
  auto& bp = c->add("", seq<T>());
  bp.add("", avg3s1<T>(true));
  bp.add("branch_pool", basic_conv<T>(in, 192, k1));
  return c;
}

template <typename T>
std::vector<UnitRecipe<T>> inception_v3() {
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 192, 3, [] {
    auto s = seq<T>();
    s->add("Conv2d_1a_3x3", basic_conv<T>(3, 32, k3s2));
    s->add("Conv2d_2a_3x3", basic_conv<T>(32, 32, k3));
    s->add("Conv2d_2b_3x3", basic_conv<T>(32, 64, k3p));
    s->add("maxpool1", max3s2<T>());
    s->add("Conv2d_3b_1x1", basic_conv<T>(64, 80, k1));
    s->add("Conv2d_4a_3x3", basic_conv<T>(80, 192, k3));
    s->add("maxpool2", max3s2<T>());
    return s;
  });
  auto unit = [&](const std::string& id, std::int64_t out, int ds, std::function<ModulePtr<T>()> make) {
    list.add(id, UnitKind::kInceptionGroup, out, ds, [make] {
      auto s = seq<T>();
      s->add("", make());
      return s;
    });
  };
  unit("Mixed_5b", 256, 3, [] { return inception_a<T>(192, 32); });
  unit("Mixed_5c", 288, 3, [] { return inception_a<T>(256, 64); });
  unit("Mixed_5d", 288, 3, [] { return inception_a<T>(288, 64); });
  unit("Mixed_6a", 768, 4, [] { return inception_b<T>(288); });
  unit("Mixed_6b", 768, 4, [] { return inception_c<T>(768, 128); });
  unit("Mixed_6c", 768, 4, [] { return inception_c<T>(768, 160); });
  unit("Mixed_6d", 768, 4, [] { return inception_c<T>(768, 160); });
  unit("Mixed_6e", 768, 4, [] { return inception_c<T>(768, 192); });
  unit("Mixed_7a", 1280, 5, [] { return inception_d<T>(768); });
  unit("Mixed_7b", 2048, 5, [] { return inception_e<T>(1280); });
  unit("Mixed_7c", 2048, 5, [] { return inception_e<T>(2048); });
  return list.take();
}

// Inception-v4 blocks; layer names follow the widely used Cadene port.
template <typename T>
ModulePtr<T> v4_stem() {
  auto s = seq<T>();
  s->add("0", basic_conv<T>(3, 32, k3s2));
  s->add("1", basic_conv<T>(32, 32, k3));
  s->add("2", basic_conv<T>(32, 64, k3p));
  auto& m3a = s->add("3", std::make_unique<nn::Concat<T>>());
  m3a.add("", max3s2<T>());
  m3a.add("conv", basic_conv<T>(64, 96, k3s2));
  auto& m4a = s->add("4", std::make_unique<nn::Concat<T>>());
  m4a.add("branch0", chain<T>(basic_conv<T>(160, 64, k1), basic_conv<T>(64, 96, k3)));
  m4a.add("branch1", chain<T>(basic_conv<T>(160, 64, k1),
                               basic_conv<T>(64, 64, k1x7),
                               basic_conv<T>(64, 64, k7x1),
                               basic_conv<T>(64, 96, k3)));
  auto& m5a = s->add("5", std::make_unique<nn::Concat<T>>());
  m5a.add("conv", basic_conv<T>(192, 192, k3s2));
  m5a.add("", max3s2<T>());
  return s;
}

template <typename T>
ModulePtr<T> v4_inception_a() {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", basic_conv<T>(384, 96, k1));
  c->add("branch1", chain<T>(basic_conv<T>(384, 64, k1), basic_conv<T>(64, 96, k3p)));
  c->add("branch2", chain<T>(basic_conv<T>(384, 64, k1),
                              basic_conv<T>(64, 96, k3p),
                              basic_conv<T>(96, 96, k3p)));
  auto& b3 = c->add("branch3", seq<T>());
  b3.add("0", avg3s1<T>(false));
  b3.add("1", basic_conv<T>(384, 96, k1));
  return c;
}

template <typename T>
ModulePtr<T> v4_reduction_a() {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", basic_conv<T>(384, 384, k3s2));
  c->add("branch1", chain<T>(basic_conv<T>(384, 192, k1),
                              basic_conv<T>(192, 224, k3p),
                              basic_conv<T>(224, 256, k3s2)));
  c->add("branch2", max3s2<T>());
  return c;
}

template <typename T>
ModulePtr<T> v4_inception_b() {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", basic_conv<T>(1024, 384, k1));
  c->add("branch1", chain<T>(basic_conv<T>(1024, 192, k1),
                              basic_conv<T>(192, 224, k1x7),
                              basic_conv<T>(224, 256, k7x1)));
  c->add("branch2", chain<T>(basic_conv<T>(1024, 192, k1),
                              basic_conv<T>(192, 192, k7x1),
                              basic_conv<T>(192, 224, k1x7),
                              basic_conv<T>(224, 224, k7x1),
                              basic_conv<T>(224, 256, k1x7)));
  auto& b3 = c->add("branch3", seq<T>());
  b3.add("0", avg3s1<T>(false));
  b3.add("1", basic_conv<T>(1024, 128, k1));
  return c;
}

template <typename T>
ModulePtr<T> v4_reduction_b() {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", chain<T>(basic_conv<T>(1024, 192, k1), basic_conv<T>(192, 192, k3s2)));
  c->add("branch1", chain<T>(basic_conv<T>(1024, 256, k1),
                              basic_conv<T>(256, 256, k1x7),
                              basic_conv<T>(256, 320, k7x1),
                              basic_conv<T>(320, 320, k3s2)));
  c->add("branch2", max3s2<T>());
  return c;
}

template <typename T>
ModulePtr<T> v4_inception_c() {
  auto c = std::make_unique<nn::Concat<T>>();
  c->add("branch0", basic_conv<T>(1536, 256, k1));
  auto& b1 = c->add("", seq<T>());
  b1.add("branch1_0", basic_conv<T>(1536, 384, k1));
  auto& b1split = b1.add("", std::make_unique<nn::Concat<T>>());
  b1split.add("branch1_1a", basic_conv<T>(384, 256, k1x3));
  b1split.add("branch1_1b", basic_conv<T>(384, 256, k3x1));
  auto& b2 = c->add("", seq<T>());
  b2.add("branch2_0", basic_conv<T>(1536, 384, k1));
  b2.add("branch2_1", basic_conv<T>(384, 448, k3x1));
  b2.add("branch2_2", basic_conv<T>(448, 512, k1x3));
  auto& b2split = b2.add("", std::make_unique<nn::Concat<T>>());
  b2split.add("branch2_3a", basic_conv<T>(512, 256, k1x3));
  b2split.add("branch2_3b", basic_conv<T>(512, 256, k3x1));
  auto& b3 = c->add("branch3", seq<T>());
  b3.add("0", avg3s1<T>(false));
  b3.add("1", basic_conv<T>(1536, 256, k1));
  return c;
}

template <typename T>
std::vector<UnitRecipe<T>> inception_v4() {
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, 384, 3, [] { return v4_stem<T>(); });
  auto repeated = [&](const std::string& id, std::int64_t out, int ds, int count, ModulePtr<T> (*make)()) {
    list.add(id, UnitKind::kInceptionGroup, out, ds, [=] {
      auto s = seq<T>();
      for (int i = 0; i < count; ++i) s->add(std::to_string(i), make());
      return s;
    });
  };
  repeated("inception_a", 384, 3, 4, &v4_inception_a<T>);
  repeated("reduction_a", 1024, 4, 1, &v4_reduction_a<T>);
  repeated("inception_b", 1024, 4, 7, &v4_inception_b<T>);
  repeated("reduction_b", 1536, 5, 1, &v4_reduction_b<T>);
  repeated("inception_c", 1536, 5, 3, &v4_inception_c<T>);
  return list.take();
}

// --------------------------------------------------------------------- Toy

template <typename T>
std::vector<UnitRecipe<T>> toy(const std::string& variant) {
  const auto cfg = parse_toy_variant(variant);
  const auto c = cfg.channels;
  auto conv_bn_relu = [=](std::int64_t in) {
    auto s = seq<T>();
    s->add("conv", conv<T>(in, c, 3, 2));
    s->add("bn", bn<T>(c));
    s->add("relu", act<T>(ActKind::kRelu));
    return s;
  };
  RecipeList<T> list;
  list.add("stem", UnitKind::kStem, c, 1, [=] { return conv_bn_relu(3); });
  std::vector<std::vector<std::string>> groups;
  for (int i = 1; i <= cfg.stages; ++i) {
    list.add("stage" + std::to_string(i), UnitKind::kResidualStage, c, 1 + i, [=] { return conv_bn_relu(c); });
    groups.insert(groups.begin(), {"stage" + std::to_string(i)});
  }
  list.assign_groups(groups);
  return list.take();
}

}  // namespace

ToyConfig parse_toy_variant(const std::string& variant) {
  static const std::regex pattern(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(variant, m, pattern)) {
    throw NotFoundError("Toy variants are spelled <stages>x<channels>, got '" + variant + "'");
  }
  ToyConfig cfg{std::stoi(m[1]), std::stoll(m[2])};
  if (cfg.stages < 1 || cfg.channels < 1) throw NotFoundError("Toy variant needs >= 1 stage and channel");
  return cfg;
}

std::string toy_variant(const ToyConfig& config) {
  return std::to_string(config.stages) + "x" + std::to_string(config.channels);
}

template <typename T>
std::vector<UnitRecipe<T>> family_recipe(Family family, const std::string& variant) {
  switch (family) {
    case Family::kDenseNet:
      return densenet<T>(variant);
    case Family::kResNet:
      return resnet<T>(variant);
    case Family::kEfficientNet:
      return efficientnet<T>(variant);
    case Family::kMobileNet:
      if (variant == "V2") return mobilenet_v2<T>();
      if (variant == "V3") return mobilenet_v3<T>();
      break;
    case Family::kMNASNet:
      return mnasnet<T>(variant);
    case Family::kInception:
      if (variant == "V3") return inception_v3<T>();
      if (variant == "V4") return inception_v4<T>();
      break;
    case Family::kToy:
      return toy<T>(variant);
  }
  throw NotFoundError("unknown " + to_string(family) + " variant '" + variant + "'");
}

template std::vector<UnitRecipe<float>> family_recipe<float>(Family, const std::string&);
template std::vector<UnitRecipe<double>> family_recipe<double>(Family, const std::string&);

ArchitectureSpec builtin_spec(Family family, const std::string& variant) {
  // Reference values: parameter counts (millions) as published for the
  // sixteen ImageNet backbones, alongside the default checkpoint key.
  struct Meta {
    double params_m;
    const char* source;
  };
  static const std::map<std::pair<Family, std::string>, Meta> published = {
      {{Family::kDenseNet, "121"}, {6.968, "imagenet:densenet121"}},
      {{Family::kDenseNet, "169"}, {12.508, "imagenet:densenet169"}},
      {{Family::kDenseNet, "201"}, {18.120, "imagenet:densenet201"}},
      {{Family::kEfficientNet, "B0"}, {4.025, "imagenet:efficientnet_b0"}},
      {{Family::kEfficientNet, "B1"}, {6.531, "imagenet:efficientnet_b1"}},
      {{Family::kEfficientNet, "B2"}, {7.721, "imagenet:efficientnet_b2"}},
      {{Family::kEfficientNet, "B3"}, {10.718, "imagenet:efficientnet_b3"}},
      {{Family::kInception, "V3"}, {27.161, "imagenet:inception_v3"}},
      {{Family::kInception, "V4"}, {42.680, "imagenet:inception_v4"}},
      {{Family::kMNASNet, "1.0"}, {5.290, "imagenet:mnasnet1_0"}},
      {{Family::kMobileNet, "V2"}, {2.242, "imagenet:mobilenet_v2"}},
      {{Family::kMobileNet, "V3"}, {4.220, "imagenet:mobilenet_v3_large"}},
      {{Family::kResNet, "101"}, {44.549, "imagenet:resnet101"}},
      {{Family::kResNet, "18"}, {11.690, "imagenet:resnet18"}},
      {{Family::kResNet, "34"}, {21.798, "imagenet:resnet34"}},
      {{Family::kResNet, "50"}, {25.557, "imagenet:resnet50"}},
  };

  ArchitectureSpec spec;
  spec.family = family;
  spec.variant = variant;
  for (auto& r : family_recipe<float>(family, variant)) spec.units.push_back(r.unit);
  spec.units.push_back(BlockUnit{"head", UnitKind::kHead, std::nullopt, kNumObservations,
                                 spec.units.back().spatial_downsample});
  if (const auto it = published.find({family, variant}); it != published.end()) {
    spec.published_param_count_m = it->second.params_m;
    spec.pretrained_source = it->second.source;
  }
  spec.validate();
  return spec;
}

std::vector<ArchitectureSpec> builtin_specs() {
  const std::vector<std::pair<Family, std::string>> members = {
      {Family::kDenseNet, "121"},     {Family::kDenseNet, "169"},     {Family::kDenseNet, "201"},
      {Family::kEfficientNet, "B0"},  {Family::kEfficientNet, "B1"},  {Family::kEfficientNet, "B2"},
      {Family::kEfficientNet, "B3"},  {Family::kInception, "V3"},     {Family::kInception, "V4"},
      {Family::kMNASNet, "1.0"},      {Family::kMobileNet, "V2"},     {Family::kMobileNet, "V3"},
      {Family::kResNet, "101"},       {Family::kResNet, "18"},        {Family::kResNet, "34"},
      {Family::kResNet, "50"},        {Family::kToy, "3x32"},         {Family::kToy, "2x8"},
  };
  std::vector<ArchitectureSpec> out;
  out.reserve(members.size());
  for (const auto& [f, v] : members) out.push_back(builtin_spec(f, v));
  return out;
}

}  // namespace truncnet
