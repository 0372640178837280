import torch
import structlog
from pathlib import Path
from banal import is_mapping

from captiongan import settings
from captiongan.exc import InputError, StateError
from captiongan.util import fingerprint
from captiongan.core.http import fetch_cached
from captiongan.embeddings.types import EmbeddingVector, ImageRecord
from captiongan.embeddings.backend import EmbeddingBackend, sentence_text

log = structlog.get_logger(__name__)


class PretrainedBackend(EmbeddingBackend):
    """Adapter for a frozen Hugging Face CLIP-style dual encoder. Image
    payloads are local file paths or HTTP(S) URLs."""

    name = "pretrained"

    def __init__(self, model_id, batch_size=64, device=None):
        from transformers import CLIPModel, CLIPProcessor

        self.model_id = model_id
        self.batch_size = batch_size
        self.device = device or settings.DEVICE
        log.info("Loading contrastive encoder", model=model_id)
        self.model = CLIPModel.from_pretrained(model_id).to(self.device)
        self.model.eval()
        for param in self.model.parameters():
            param.requires_grad_(False)
        self.processor = CLIPProcessor.from_pretrained(model_id)
        d1 = self.model.config.projection_dim
        super().__init__(d1, fingerprint("pretrained", model_id, d1))

    def _check_loaded(self):
        if self.model is None:
            raise StateError("Encoder is not loaded", model=self.model_id)

    def _resolve_image(self, image):
        from PIL import Image

        payload = image.payload if isinstance(image, ImageRecord) else image
        if is_mapping(payload):
            payload = payload.get("path") or payload.get("url")
        if payload is None:
            raise InputError("Image payload is missing", image=image)
        payload = str(payload)
        if payload.startswith(("http://", "https://")):
            path = fetch_cached(payload)
        else:
            path = Path(payload)
        try:
            with Image.open(path) as img:
                return img.convert("RGB")
        except (OSError, ValueError) as exc:
            raise InputError("Cannot read image payload", path=str(path)) from exc

    def _to_vectors(self, features):
        features = features.detach().to(torch.float64).cpu().numpy()
        fp = self.fingerprint
        return [EmbeddingVector.from_raw(f, fingerprint=fp) for f in features]

    @torch.no_grad()
    def encode_images(self, images, workers=1):
        self._check_loaded()
        images = list(images)
        vectors = []
        for i in range(0, len(images), self.batch_size):
            chunk = images[i : i + self.batch_size]
            batch = [self._resolve_image(img) for img in chunk]
            inputs = self.processor(images=batch, return_tensors="pt").to(self.device)
            vectors.extend(self._to_vectors(self.model.get_image_features(**inputs)))
        return vectors

    @torch.no_grad()
    def encode_texts(self, sentences, workers=1):
        self._check_loaded()
        texts = [sentence_text(s) for s in sentences]
        vectors = []
        for i in range(0, len(texts), self.batch_size):
            inputs = self.processor(
                text=texts[i : i + self.batch_size],
                return_tensors="pt",
                padding=True,
                truncation=True,
            ).to(self.device)
            vectors.extend(self._to_vectors(self.model.get_text_features(**inputs)))
        return vectors

    def encode_image(self, image):
        return self.encode_images([image])[0]

    def encode_text(self, sentence):
        return self.encode_texts([sentence])[0]
