"""
Image quality, kernel accuracy and evaluation reports.
"""
