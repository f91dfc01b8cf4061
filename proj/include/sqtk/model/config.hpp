#pragma once

#include <json.hpp>

#include "sqtk/common.hpp"

namespace sqtk {

// Transformer and backbone dimensions. Toy defaults; paper_scale() holds the
// published full-scale values.
struct ModelConfig {
  int hidden_dim = 64;     // D
  int scales = 4;          // S
  int num_queries = 96;    // N, detection queries per template
  int encoder_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int base_stride_log2 = 3;    // finest feature stride = 8
  int label_embed_count = 10;  // category table for the original-denoising arm

  void validate() const {
    if (hidden_dim % heads != 0)
      throw ContractViolation("ModelConfig: hidden_dim must be divisible by heads");
    if (num_queries % scales != 0)
      throw ContractViolation("ModelConfig: num_queries must be divisible by scales");
    if (hidden_dim % 8 != 0)
      throw ContractViolation("ModelConfig: hidden_dim must be divisible by 8");
    if (scales < 1 || encoder_layers < 1 || decoder_layers < 1 || heads < 1 ||
        ffn_dim < 1 || num_queries < 1)
      throw ContractViolation("ModelConfig: all counts must be positive");
    if (base_stride_log2 < 1)
      throw ContractViolation("ModelConfig: base_stride_log2 must be >= 1");
  }

  int base_stride() const { return 1 << base_stride_log2; }
  int head_dim() const { return hidden_dim / heads; }

  static ModelConfig paper_scale() {
    ModelConfig c;
    c.hidden_dim = 256;
    c.scales = 4;
    c.num_queries = 600;
    c.encoder_layers = 6;
    c.decoder_layers = 6;
    c.heads = 8;
    c.ffn_dim = 2048;
    return c;
  }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"hidden_dim", c.hidden_dim},
                        {"scales", c.scales},
                        {"num_queries", c.num_queries},
                        {"encoder_layers", c.encoder_layers},
                        {"decoder_layers", c.decoder_layers},
                        {"heads", c.heads},
                        {"ffn_dim", c.ffn_dim},
                        {"base_stride_log2", c.base_stride_log2},
                        {"label_embed_count", c.label_embed_count}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.scales = j.value("scales", c.scales);
  c.num_queries = j.value("num_queries", c.num_queries);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.base_stride_log2 = j.value("base_stride_log2", c.base_stride_log2);
  c.label_embed_count = j.value("label_embed_count", c.label_embed_count);
  c.validate();
  return c;
}

}  // namespace sqtk
