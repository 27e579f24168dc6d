"""Baseline JPEG machinery: transforms, tables, entropy coding, JFIF I/O."""
from .entropy import EOB, ZRL, Token, estimate_size_bits, rle_tokenize, size_category
from .image import (ColorSpace, ImagePlanes, load_image, pad_to_blocks, rgb_to_ycbcr,
                    save_png, to_codec_space, ycbcr_to_rgb, ycbcr_to_rgb_int)
from .jfif import (DecodedJpeg, EncodedJpeg, decode_jpeg, encode_jpeg, encode_quantized,
                   quantize_image, reconstruct_image, to_display)
from .tables import (ANNEX_K_CHROMA, ANNEX_K_LUMA, UNZIGZAG, ZIGZAG, QuantTableSet,
                     quality_scaled, round_half_away)
from .transform import (DCT, blockify, dequantize, forward_dct, inverse_dct, inverse_dct_int,
                        inverse_zigzag, quantize, reconstruct_blocks, unblockify, zigzag)
