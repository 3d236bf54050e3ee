// embedding.h — tri-modal embedding space shared by images, class labels and audio.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sonovid/audio.h"
#include "sonovid/config.h"
#include "sonovid/dataset.h"
#include "sonovid/image_io.h"
#include "sonovid/nn.h"
#include "sonovid/rng.h"
#include "sonovid/tensor.h"

namespace sonovid {

// 1 - a.b / (|a| |b|), computed in double precision. Rejects zero-norm input.
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);
double cosine_distance(const Tensor& a, const Tensor& b);

// Analytic gradient of cosine_distance with respect to both arguments.
void cosine_distance_grad(const std::vector<double>& a, const std::vector<double>& b,
                          std::vector<double>* da, std::vector<double>* db);

// Batch packing. Mel values are mapped through (v + 6) / 4 so typical log
// energies land near [-2, 2] before entering the audio tower.
Tensor pack_images(const std::vector<const Image*>& imgs);
Tensor pack_mels(const std::vector<const MelSpectrogram*>& mels, const std::vector<int>& offsets,
                 int width);
float mel_to_input(float v);

struct EmbeddingNets {
    int dim = 0;
    int classes = 0;
    int image_size = 0;
    int n_mels = 0;
    ParamSet params;

    // image tower: four stride-2 convs, pooled, projected
    Conv2d iv1, iv2, iv3, iv4;
    Linear iv_fc;
    // audio tower: stride-2 stem and downs with one residual pair before the last down
    Conv2d au1, au2, au3, au_r1, au_r2, au4;
    Linear au_fc;
    // label table [classes, dim]
    Param* text_table = nullptr;
    // log of the logit scale, shared by both contrastive directions
    Param* log_scale = nullptr;

    Var encode_images(Graph& g, Var x, bool train) const;  // [B,3,H,W] -> [B,dim] unit rows
    // Same tower, also collecting the two middle activation maps for use as a
    // perceptual feature space.
    Var encode_images_with_taps(Graph& g, Var x, bool train, std::vector<Var>* taps) const;
    Var encode_mels(Graph& g, Var x, bool train) const;    // [B,1,M,W] -> [B,dim] unit rows
    Var encode_labels(Graph& g, const std::vector<int>& ids, bool train) const;

    // single-input conveniences running a throwaway frozen graph
    Tensor embed_image(const Image& img) const;
    Tensor embed_mel(const MelSpectrogram& mel) const;
    Tensor embed_label(int id) const;

    double logit_scale() const;
};

EmbeddingNets make_embedding_nets(const TrainConfig& cfg, RandomSource& rng);

struct ContrastiveParts {
    double image_text = 0;  // mean of the two softmax directions
    double image_audio = 0;
    double total = 0;
};

// Symmetric cross-entropy over image<->text and image<->audio pairs; the
// positive for row i is column i.
Var contrastive_loss(Graph& g, const EmbeddingNets& nets, Var images, Var mels,
                     const std::vector<int>& labels, bool train, ContrastiveParts* parts);

struct EmbeddingTrainStats {
    double first_loss = 0;
    double final_loss = 0;
    double heldout_retrieval = 0;
    int steps_run = 0;
    int skipped_batches = 0;
};

// Every fifth clip is held out; the rest train. Five is coprime to the usual
// class counts, so a round-robin labeled set keeps all classes in both splits.
std::pair<std::vector<int>, std::vector<int>> split_train_heldout(int n);

EmbeddingTrainStats train_contrastive(EmbeddingNets& nets, const std::vector<LoadedClip>& clips,
                                      const TrainConfig& cfg, RandomSource& rng,
                                      bool verbose = false);

// Class-level audio->image top-1 accuracy over consecutive batches.
double retrieval_top1(const EmbeddingNets& nets, const std::vector<LoadedClip>& clips,
                      const std::vector<int>& indices, int batch);

}  // namespace sonovid
