"""
Training stages: content encoder, vocoder, teacher and distillation
"""
