"""Registry of supported pretrained vision encoders.

Each entry pins the model's published feature width and which representation
counts as the penultimate output; loaders require the `models` extra
(torch + transformers) and pretrained weights.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelSpec:
    name: str
    width: int               # published embedding width
    layer: str               # which representation is dumped
    source: str              # weight source identifier
    image_size: int = 224


REGISTRY = {
    "clip-vit-b": ModelSpec(
        name="clip-vit-b", width=512, layer="image-encoder output embedding",
        source="openai/clip-vit-base-patch32",
    ),
    "clip-r50": ModelSpec(
        name="clip-r50", width=1024, layer="image-encoder output embedding",
        source="open_clip:RN50/openai",
    ),
    "vit-b": ModelSpec(
        name="vit-b", width=768, layer="pre-head class-token representation",
        source="google/vit-base-patch16-224-in21k",
    ),
    "mae-vit-b": ModelSpec(
        name="mae-vit-b", width=768, layer="pre-head class-token representation",
        source="facebook/vit-mae-base",
    ),
    "dinov2": ModelSpec(
        name="dinov2", width=768, layer="pre-head class-token representation",
        source="facebook/dinov2-base",
    ),
}


def model_spec(name: str) -> ModelSpec:
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise KeyError(f"unknown model {name!r}; supported: {known}")
    return REGISTRY[name]


def load_encoder(name: str, device: str = "cpu"):
    """Build a callable batch-of-PIL-images -> (B, width) float array.

    Requires torch, transformers, and downloadable pretrained weights.
    """
    spec = model_spec(name)
    try:
        import torch
    except ImportError as exc:
        raise RuntimeError(
            "pretrained encoders need the `models` extra (torch, transformers)"
        ) from exc

    if name == "clip-r50":
        try:
            import open_clip
        except ImportError as exc:
            raise RuntimeError("clip-r50 needs the open_clip package") from exc
        model, _, preprocess = open_clip.create_model_and_transforms(
            "RN50", pretrained="openai", device=device
        )
        model.eval()

        def encode(images):
            batch = torch.stack([preprocess(img) for img in images]).to(device)
            with torch.no_grad():
                return model.encode_image(batch).cpu().numpy()

        return encode, spec

    from transformers import AutoImageProcessor, AutoModel, CLIPVisionModelWithProjection

    if name == "clip-vit-b":
        model = CLIPVisionModelWithProjection.from_pretrained(spec.source).to(device).eval()
        processor = AutoImageProcessor.from_pretrained(spec.source)

        def encode(images):
            inputs = processor(images=images, return_tensors="pt").to(device)
            with torch.no_grad():
                return model(**inputs).image_embeds.cpu().numpy()

        return encode, spec

    model = AutoModel.from_pretrained(spec.source).to(device).eval()
    processor = AutoImageProcessor.from_pretrained(spec.source)

    def encode(images):
        inputs = processor(images=images, return_tensors="pt").to(device)
        with torch.no_grad():
            hidden = model(**inputs).last_hidden_state
        return hidden[:, 0, :].cpu().numpy()  # class token, pre-head

    return encode, spec
